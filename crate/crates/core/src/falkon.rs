//! Nyström-approximated KFDA witness solved by a preconditioned Krylov
//! iteration (conjugate residual).
//!
//! With centers `Z_M ⊂ Z` the coefficients solve
//!
//! ```text
//! (K_MZ N Nᵀ K_ZM + (n + m) λ K_MM) α = K_MZ δ
//! ```
//!
//! where `N = diag(P_n, P_m)` (or the `√c`-scaled blocks when `c` is given).
//! Nothing of size `(n + m) × (n + m)` is ever formed: `N` is applied as a
//! per-label mean subtraction and the only dense matrices are `K_ZM`
//! (`(n + m) × M`) and the `M × M` factors.
//!
//! Factors are lower-triangular: `K_MM + εI = L Lᵀ` and
//! `Lᵀ N_M N_Mᵀ L / M + λI = G Gᵀ`. The preconditioner is `B = L⁻ᵀ G⁻ᵀ`.

use faer::{Mat, MatRef};
use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Result, WitsError};
use crate::kernel::Kernel;
use crate::linalg::{self, Cholesky};
use crate::sample::Sample;
use crate::witness::{Orientation, WitnessModel};

/// Relative preconditioned residual at which the iteration stops early.
pub const CG_TOLERANCE: f64 = 1e-10;

/// Base jitter for both factorizations, relative to `trace / M`.
pub const FALKON_JITTER: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct FalkonConfig {
    pub num_centers: usize,
    pub cg_iterations: usize,
    pub lambda: f64,
    pub seed: u64,
    /// `None` uses the unscaled centering `N`; `Some(c)` uses the blocks
    /// `P_n/√c`, `P_m/√(1−c)`, which reproduces the exact solver at equal λ.
    pub c: Option<f64>,
}

impl FalkonConfig {
    pub fn new(num_centers: usize, cg_iterations: usize, lambda: f64, seed: u64) -> Self {
        Self {
            num_centers,
            cg_iterations,
            lambda,
            seed,
            c: None,
        }
    }

    pub fn with_c(mut self, c: f64) -> Self {
        self.c = Some(c);
        self
    }

    pub fn validate(&self, pooled: usize) -> Result<()> {
        if self.num_centers == 0 || self.num_centers > pooled {
            return Err(WitsError::param(
                "falkon_centers",
                format!("need 1 <= M <= {pooled}, got {}", self.num_centers),
            ));
        }
        if self.cg_iterations == 0 {
            return Err(WitsError::param("cg_iters", "need at least one CG iteration"));
        }
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(WitsError::param("lambda", format!("must be positive, got {}", self.lambda)));
        }
        if let Some(c) = self.c {
            if !(c > 0.0 && c < 1.0) {
                return Err(WitsError::param("c", format!("must lie in (0, 1), got {c}")));
            }
        }
        Ok(())
    }
}

fn check_labels(labels: &[i8]) -> Result<()> {
    if let Some(i) = labels.iter().position(|&l| l != 1 && l != -1) {
        return Err(WitsError::param("labels", format!("label {i} is {}, expected ±1", labels[i])));
    }
    Ok(())
}

/// Uniform subsample of `m` points without replacement, labels kept aligned.
/// Also returns the chosen indices into `z`.
pub fn select_centers(
    z: &Sample,
    labels: &[i8],
    m: usize,
    seed: u64,
) -> Result<(Sample, Vec<i8>, Vec<usize>)> {
    if labels.len() != z.len() {
        return Err(WitsError::DimensionMismatch {
            expected: z.len(),
            found: labels.len(),
        });
    }
    check_labels(labels)?;
    if m == 0 || m > z.len() {
        return Err(WitsError::param(
            "falkon_centers",
            format!("need 1 <= M <= {}, got {m}", z.len()),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let idx = index::sample(&mut rng, z.len(), m).into_vec();
    let centers = z.select(&idx);
    let center_labels = idx.iter().map(|&i| labels[i]).collect();
    Ok((centers, center_labels, idx))
}

/// Label-grouped centering: `v_i ↦ s_{y_i} (v_i − mean_{j: y_j = y_i} v_j)`.
#[derive(Debug, Clone)]
struct Centering<'a> {
    labels: &'a [i8],
    counts: [usize; 2],
    scale: [f64; 2],
}

fn slot(label: i8) -> usize {
    usize::from(label < 0)
}

impl<'a> Centering<'a> {
    fn new(labels: &'a [i8], c: Option<f64>) -> Self {
        let mut counts = [0usize; 2];
        for &l in labels {
            counts[slot(l)] += 1;
        }
        let scale = match c {
            None => [1.0, 1.0],
            Some(c) => [1.0 / c.sqrt(), 1.0 / (1.0 - c).sqrt()],
        };
        Self {
            labels,
            counts,
            scale,
        }
    }

    fn apply(&self, v: &mut [f64]) {
        let mut sums = [0.0f64; 2];
        for (x, &l) in v.iter().zip(self.labels) {
            sums[slot(l)] += x;
        }
        let means = [0, 1].map(|s| {
            if self.counts[s] == 0 {
                0.0
            } else {
                sums[s] / self.counts[s] as f64
            }
        });
        for (x, &l) in v.iter_mut().zip(self.labels) {
            let s = slot(l);
            *x = self.scale[s] * (*x - means[s]);
        }
    }

    /// `N Nᵀ v`; the centering is symmetric so this is two applications.
    fn apply_twice(&self, v: &mut [f64]) {
        self.apply(v);
        self.apply(v);
    }
}

/// The two lower-triangular preconditioner factors.
#[derive(Debug, Clone)]
pub struct Preconditioner {
    /// `K_MM + εI = L Lᵀ`.
    pub kmm_factor: Cholesky,
    /// `Lᵀ N_M N_Mᵀ L / M + λI = G Gᵀ`.
    pub inner_factor: Cholesky,
}

fn jittered_cholesky(a: MatRef<'_, f64>) -> Result<Cholesky> {
    let m = a.nrows();
    let trace: f64 = (0..m).map(|i| a[(i, i)]).sum();
    linalg::cholesky_with_jitter(a, FALKON_JITTER * trace / m as f64)
}

/// Builds both preconditioner factors from the centers and their labels.
pub fn falkon_preconditioner(
    zm: &Sample,
    labels_m: &[i8],
    k: &Kernel,
    lambda: f64,
    c: Option<f64>,
) -> Result<Preconditioner> {
    if labels_m.len() != zm.len() {
        return Err(WitsError::DimensionMismatch {
            expected: zm.len(),
            found: labels_m.len(),
        });
    }
    check_labels(labels_m)?;
    zm.require_nonempty("Nyström centers")?;
    if !(lambda > 0.0) {
        return Err(WitsError::param("lambda", format!("must be positive, got {lambda}")));
    }
    let kmm = k.gram_symmetric(zm)?;
    preconditioner_from_gram(kmm.as_ref(), labels_m, lambda, c)
}

fn preconditioner_from_gram(
    kmm: MatRef<'_, f64>,
    labels_m: &[i8],
    lambda: f64,
    c: Option<f64>,
) -> Result<Preconditioner> {
    let m = kmm.nrows();
    let kmm_factor = jittered_cholesky(kmm)?;
    // N_M L, column by column; N_M is symmetric so Lᵀ N_M N_Mᵀ L = (N_M L)ᵀ (N_M L).
    let centering = Centering::new(labels_m, c);
    let mut nl = kmm_factor.lower.clone();
    let mut buf = vec![0.0; m];
    for j in 0..m {
        for (i, b) in buf.iter_mut().enumerate() {
            *b = nl[(i, j)];
        }
        centering.apply(&mut buf);
        for (i, b) in buf.iter().enumerate() {
            nl[(i, j)] = *b;
        }
    }
    let gram = nl.transpose() * &nl;
    let inv_m = 1.0 / m as f64;
    let inner = Mat::from_fn(m, m, |i, j| {
        gram[(i, j)] * inv_m + if i == j { lambda } else { 0.0 }
    });
    let inner_factor = jittered_cholesky(inner.as_ref())?;
    Ok(Preconditioner {
        kmm_factor,
        inner_factor,
    })
}

/// Outcome of a Falkon solve.
#[derive(Debug, Clone)]
pub struct FalkonSolution {
    pub centers: Sample,
    pub center_labels: Vec<i8>,
    pub center_indices: Vec<usize>,
    /// Coefficients over `centers`.
    pub coefficients: Vec<f64>,
    /// `‖r_k‖ / ‖r_0‖` of the preconditioned system, starting with `1` at `k = 0`.
    pub residual_history: Vec<f64>,
    /// Shapes of every dense matrix the solve allocated.
    pub matrix_shapes: Vec<(usize, usize)>,
}

impl FalkonSolution {
    pub fn iterations(&self) -> usize {
        self.residual_history.len() - 1
    }
}

/// Nyström KFDA coefficients over `M` randomly chosen centers.
pub fn fda_falkon(z: &Sample, labels: &[i8], k: &Kernel, config: &FalkonConfig) -> Result<FalkonSolution> {
    if labels.len() != z.len() {
        return Err(WitsError::DimensionMismatch {
            expected: z.len(),
            found: labels.len(),
        });
    }
    check_labels(labels)?;
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(WitsError::EmptySample("Falkon needs labels from both classes"));
    }
    config.validate(z.len())?;

    let (centers, center_labels, center_indices) =
        select_centers(z, labels, config.num_centers, config.seed)?;
    let m = centers.len();
    let total = z.len();
    let kzm = k.gram(z, &centers)?;
    // K_MM is a row subset of K_ZM.
    let kmm = Mat::from_fn(m, m, |i, j| kzm[(center_indices[i], j)]);
    let pre = preconditioner_from_gram(kmm.as_ref(), &center_labels, config.lambda, config.c)?;
    let matrix_shapes = vec![
        (kzm.nrows(), kzm.ncols()),
        (m, m),
        (m, m),
        (m, m),
    ];

    let centering = Centering::new(labels, config.c);
    let lambda_n = config.lambda * total as f64;
    let l = pre.kmm_factor.lower.as_ref();
    let g = pre.inner_factor.lower.as_ref();

    let op = |beta: &[f64]| -> Vec<f64> {
        let v = linalg::solve_lower_transpose(g, beta);
        let w = linalg::solve_lower_transpose(l, &v);
        let mut kw = linalg::mat_vec(kzm.as_ref(), &w);
        centering.apply_twice(&mut kw);
        let c = linalg::mat_t_vec(kzm.as_ref(), &kw);
        let mut u = linalg::solve_lower(l, &c);
        for (ui, vi) in u.iter_mut().zip(&v) {
            *ui += lambda_n * vi;
        }
        linalg::solve_lower(g, &u)
    };

    let delta: Vec<f64> = labels
        .iter()
        .map(|&y| if y == 1 { 1.0 / n_pos as f64 } else { -1.0 / n_neg as f64 })
        .collect();
    let rhs = linalg::solve_lower(g, &linalg::solve_lower(l, &linalg::mat_t_vec(kzm.as_ref(), &delta)));
    let (beta, residual_history) = conjugate_residual(op, &rhs, config.cg_iterations, CG_TOLERANCE)?;
    let coefficients = linalg::solve_lower_transpose(l, &linalg::solve_lower_transpose(g, &beta));
    if let Some(bad) = coefficients.iter().position(|a| !a.is_finite()) {
        return Err(WitsError::Numerical(format!("Falkon coefficient {bad} is not finite")));
    }
    Ok(FalkonSolution {
        centers,
        center_labels,
        center_indices,
        coefficients,
        residual_history,
        matrix_shapes,
    })
}

/// Conjugate-residual iteration from `x₀ = 0` for a symmetric positive
/// definite `op`. It spans the same Krylov spaces as CG but minimizes
/// `‖r_k‖`, so the residual history is non-increasing. Returns the iterate and
/// the relative residual norms `‖r_k‖ / ‖b‖` for `k = 0, 1, …`.
pub fn conjugate_residual<F>(op: F, b: &[f64], max_iter: usize, tol: f64) -> Result<(Vec<f64>, Vec<f64>)>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let mut x = vec![0.0; b.len()];
    let b_norm = linalg::norm(b);
    let mut history = vec![1.0];
    if b_norm == 0.0 {
        return Ok((x, history));
    }
    let mut r = b.to_vec();
    let mut ar = op(&r);
    let mut p = r.clone();
    let mut ap = ar.clone();
    let mut r_ar = linalg::dot(&r, &ar);
    for iteration in 1..=max_iter {
        let ap_ap = linalg::dot(&ap, &ap);
        if !(r_ar > 0.0 && ap_ap > 0.0) || !(r_ar.is_finite() && ap_ap.is_finite()) {
            return Err(WitsError::CgBreakdown {
                iteration,
                reason: format!("rᵀAr = {r_ar:e}, ‖Ap‖² = {ap_ap:e}"),
            });
        }
        let step = r_ar / ap_ap;
        for ((xi, ri), (pi, api)) in x.iter_mut().zip(r.iter_mut()).zip(p.iter().zip(&ap)) {
            *xi += step * pi;
            *ri -= step * api;
        }
        let rel = linalg::norm(&r) / b_norm;
        history.push(rel);
        if rel < tol || iteration == max_iter {
            break;
        }
        ar = op(&r);
        let r_ar_next = linalg::dot(&r, &ar);
        let beta = r_ar_next / r_ar;
        for (((pi, ri), api), ari) in p.iter_mut().zip(&r).zip(ap.iter_mut()).zip(&ar) {
            *pi = ri + beta * *pi;
            *api = ari + beta * *api;
        }
        r_ar = r_ar_next;
    }
    Ok((x, history))
}

/// Nyström KFDA witness on the pooled training sample, oriented on the
/// training means.
pub fn kfda_witness_nystrom(
    k: &Kernel,
    x_train: &Sample,
    y_train: &Sample,
    config: &FalkonConfig,
) -> Result<WitnessModel> {
    Ok(kfda_witness_nystrom_with_diagnostics(k, x_train, y_train, config)?.0)
}

/// [`kfda_witness_nystrom`] that also returns the solver diagnostics.
pub fn kfda_witness_nystrom_with_diagnostics(
    k: &Kernel,
    x_train: &Sample,
    y_train: &Sample,
    config: &FalkonConfig,
) -> Result<(WitnessModel, FalkonSolution)> {
    x_train.require_nonempty("X_tr")?;
    y_train.require_nonempty("Y_tr")?;
    let z = x_train.concat(y_train)?;
    let mut labels = vec![1i8; x_train.len()];
    labels.extend(std::iter::repeat_n(-1i8, y_train.len()));
    let solution = fda_falkon(&z, &labels, k, config)?;
    let model = WitnessModel::new(
        solution.centers.clone(),
        solution.coefficients.clone(),
        *k,
        Orientation::Positive,
    )?;
    let model = if model.mean_difference(x_train, y_train)? < 0.0 {
        model.negated()
    } else {
        model
    };
    Ok((model, solution))
}
