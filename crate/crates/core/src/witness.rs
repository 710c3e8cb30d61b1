//! Stage-I witness functions.
//!
//! A witness is `h(·) = s · Σᵢ αᵢ k(zᵢ, ·)` over basis points `zᵢ`, where the
//! orientation `s ∈ {+1, −1}` makes the training mean on X at least the
//! training mean on Y.
//!
//! The regularized KFDA witness solves
//!
//! ```text
//! (K N_c K / N + λ K) α = K δ,     N = n + m,
//! ```
//!
//! with `δ = (1/n, …, 1/n, −1/m, …, −1/m)` and the block centering
//! `N_c = diag(P_n / c, P_m / (1 − c))`. Writing `N_c = S²` with
//! `S = diag(P_n/√c, P_m/√(1−c))`, any solution of the reduced system
//! `(S² K / N + λ I) α = δ` solves the one above, and the reduced system
//! has the closed form
//!
//! ```text
//! α = (δ − S (S K S / N + λ I)⁻¹ S K δ / N) / λ.
//! ```
//!
//! `S K S / N + λ I ⪰ λ I`, so the only factorization needed is one
//! Cholesky of a well-conditioned symmetric matrix.

use faer::{Mat, MatRef};

use crate::error::{Result, WitsError};
use crate::kernel::Kernel;
use crate::linalg::{self, Cholesky};
use crate::mmd_stats::DiscreteMeasure;
use crate::parallel;
use crate::sample::Sample;

/// Default split ratio between Stage I and Stage II.
pub const DEFAULT_SPLIT_RATIO: f64 = 0.5;

/// Base diagonal jitter, relative to the mean diagonal of the factored matrix.
pub const JITTER_SCALE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Orientation {
    Positive,
    Negative,
}

impl Orientation {
    pub fn sign(self) -> f64 {
        match self {
            Orientation::Positive => 1.0,
            Orientation::Negative => -1.0,
        }
    }

    pub fn flipped(self) -> Self {
        match self {
            Orientation::Positive => Orientation::Negative,
            Orientation::Negative => Orientation::Positive,
        }
    }
}

/// A learned witness function `h(·) = sign · Σᵢ αᵢ k(zᵢ, ·)`.
#[derive(Debug, Clone)]
pub struct WitnessModel {
    basis: Sample,
    coefficients: Vec<f64>,
    kernel: Kernel,
    orientation: Orientation,
}

impl WitnessModel {
    pub fn new(
        basis: Sample,
        coefficients: Vec<f64>,
        kernel: Kernel,
        orientation: Orientation,
    ) -> Result<Self> {
        if basis.len() != coefficients.len() {
            return Err(WitsError::param(
                "coefficients",
                format!("{} coefficients for {} basis points", coefficients.len(), basis.len()),
            ));
        }
        if let Some(bad) = coefficients.iter().position(|c| !c.is_finite()) {
            return Err(WitsError::Numerical(format!(
                "witness coefficient {bad} is not finite"
            )));
        }
        Ok(Self {
            basis,
            coefficients,
            kernel,
            orientation,
        })
    }

    /// Builds the model and picks the orientation so that
    /// `mean_X(h) − mean_Y(h) ≥ 0` on the given training data.
    pub fn oriented(
        basis: Sample,
        coefficients: Vec<f64>,
        kernel: Kernel,
        x_train: &Sample,
        y_train: &Sample,
    ) -> Result<Self> {
        let mut model = Self::new(basis, coefficients, kernel, Orientation::Positive)?;
        if model.mean_difference(x_train, y_train)? < 0.0 {
            model.orientation = Orientation::Negative;
        }
        Ok(model)
    }

    pub fn basis(&self) -> &Sample {
        &self.basis
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    /// The same function with the opposite sign.
    pub fn negated(&self) -> Self {
        Self {
            orientation: self.orientation.flipped(),
            ..self.clone()
        }
    }

    /// Oriented witness values at every point of `z`.
    pub fn evaluate(&self, z: &Sample) -> Result<Vec<f64>> {
        if z.is_empty() {
            return Ok(Vec::new());
        }
        self.basis.check_dim(z)?;
        let sign = self.orientation.sign();
        Ok(parallel::map_range(z.len(), |j| {
            let p = z.point(j);
            sign * self
                .basis
                .iter()
                .zip(&self.coefficients)
                .map(|(b, &a)| a * self.kernel.eval_unchecked(b, p))
                .sum::<f64>()
        }))
    }

    /// `mean_X(h) − mean_Y(h)`.
    pub fn mean_difference(&self, x: &Sample, y: &Sample) -> Result<f64> {
        x.require_nonempty("X")?;
        y.require_nonempty("Y")?;
        Ok(mean(&self.evaluate(x)?) - mean(&self.evaluate(y)?))
    }
}

/// Evaluates `h` on `z`; free-function form of [`WitnessModel::evaluate`].
pub fn evaluate_witness(h: &WitnessModel, z: &Sample) -> Result<Vec<f64>> {
    h.evaluate(z)
}

/// Fraction of the data that goes to Stage I, in `(0, 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SplitRatio(f64);

impl SplitRatio {
    pub fn new(r: f64) -> Result<Self> {
        if !(r > 0.0 && r < 1.0) {
            return Err(WitsError::param("r", format!("split ratio must lie in (0, 1), got {r}")));
        }
        Ok(Self(r))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `⌈r·n⌉` training points out of `n`.
    pub fn train_size(self, n: usize) -> usize {
        // Guard against 0.5 * 100 landing on 50.000000000000007.
        let raw = self.0 * n as f64;
        let rounded = raw.round();
        if (raw - rounded).abs() < 1e-9 {
            rounded as usize
        } else {
            raw.ceil() as usize
        }
    }
}

impl Default for SplitRatio {
    fn default() -> Self {
        Self(DEFAULT_SPLIT_RATIO)
    }
}

/// The `δ` vector: `1/n` on the first `n` entries and `−1/m` on the last `m`.
pub fn delta_vector(n: usize, m: usize) -> Vec<f64> {
    let mut d = vec![1.0 / n as f64; n];
    d.extend(std::iter::repeat_n(-1.0 / m as f64, m));
    d
}

/// MMD witness `μ_X − μ_Y` of the training data.
pub fn mmd_witness(k: &Kernel, x_train: &Sample, y_train: &Sample) -> Result<WitnessModel> {
    x_train.require_nonempty("X_tr")?;
    y_train.require_nonempty("Y_tr")?;
    let basis = x_train.concat(y_train)?;
    WitnessModel::new(
        basis,
        delta_vector(x_train.len(), y_train.len()),
        *k,
        Orientation::Positive,
    )
}

/// Witness `μ_P − μ_Q` of two discrete measures.
pub fn mean_embedding_witness(
    k: &Kernel,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
) -> Result<WitnessModel> {
    let basis = p.support.concat(&q.support)?;
    let mut coefficients = p.weights.clone();
    coefficients.extend(q.weights.iter().map(|w| -w));
    WitnessModel::new(basis, coefficients, *k, Orientation::Positive)
}

fn check_c(c: f64) -> Result<()> {
    if !(c > 0.0 && c < 1.0) {
        return Err(WitsError::param("c", format!("must lie in (0, 1), got {c}")));
    }
    Ok(())
}

/// Dense block centering `diag(P_n / c, P_m / (1 − c))` with
/// `P_l = I_l − 1 1ᵀ / l`.
pub fn build_centering(n: usize, m: usize, c: f64) -> Result<Mat<f64>> {
    if n == 0 || m == 0 {
        return Err(WitsError::param("n, m", "both blocks need at least one point"));
    }
    check_c(c)?;
    Ok(Mat::from_fn(n + m, n + m, |i, j| {
        let (same_block, size, scale) = match (i < n, j < n) {
            (true, true) => (true, n, 1.0 / c),
            (false, false) => (true, m, 1.0 / (1.0 - c)),
            _ => (false, 1, 0.0),
        };
        if !same_block {
            return 0.0;
        }
        let eye = if i == j { 1.0 } else { 0.0 };
        scale * (eye - 1.0 / size as f64)
    }))
}

/// Coefficients of an exact KFDA solve plus diagnostics.
#[derive(Debug, Clone)]
pub struct KfdaSolution {
    pub coefficients: Vec<f64>,
    /// `‖(K N_c K / N + λK) α − K δ‖ / ‖K δ‖`.
    pub relative_residual: f64,
    /// Diagonal jitter that the Cholesky factorization needed (usually 0).
    pub jitter: f64,
}

/// The λ-independent part of the exact KFDA system for one Gram matrix whose
/// first `n` rows belong to X. Reusable across a λ grid.
#[derive(Debug, Clone)]
pub struct KfdaSystem {
    gram: Mat<f64>,
    n: usize,
    m: usize,
    /// `s_i`: 1/√c on X, 1/√(1−c) on Y.
    scale: [f64; 2],
    /// `S K S / N`.
    centered: Mat<f64>,
    delta: Vec<f64>,
    k_delta: Vec<f64>,
}

impl KfdaSystem {
    pub fn new(gram: Mat<f64>, n: usize, c: f64) -> Result<Self> {
        let total = gram.nrows();
        if gram.ncols() != total {
            return Err(WitsError::param("gram", "matrix must be square"));
        }
        if n == 0 || n >= total {
            return Err(WitsError::EmptySample("KFDA needs points from both samples"));
        }
        check_c(c)?;
        let m = total - n;
        let scale = [1.0 / c.sqrt(), 1.0 / (1.0 - c).sqrt()];
        let block = |i: usize| usize::from(i >= n);
        let sizes = [n as f64, m as f64];

        // Row means of K over each block, and the four block grand means.
        let mut row_means = vec![[0.0f64; 2]; total];
        for j in 0..total {
            let col = gram.col(j);
            let bj = block(j);
            for (i, rm) in row_means.iter_mut().enumerate() {
                rm[bj] += col[i];
            }
        }
        for rm in &mut row_means {
            rm[0] /= sizes[0];
            rm[1] /= sizes[1];
        }
        let mut grand = [[0.0f64; 2]; 2];
        for (i, rm) in row_means.iter().enumerate() {
            grand[block(i)][0] += rm[0];
            grand[block(i)][1] += rm[1];
        }
        for (a, row) in grand.iter_mut().enumerate() {
            for v in row.iter_mut() {
                *v /= sizes[a];
            }
        }

        let nf = total as f64;
        let centered = Mat::from_fn(total, total, |i, j| {
            let (bi, bj) = (block(i), block(j));
            let pkp = gram[(i, j)] - row_means[i][bj] - row_means[j][bi] + grand[bi][bj];
            scale[bi] * scale[bj] * pkp / nf
        });
        let delta = delta_vector(n, m);
        let k_delta = row_means.iter().map(|rm| rm[0] - rm[1]).collect();
        Ok(Self {
            gram,
            n,
            m,
            scale,
            centered,
            delta,
            k_delta,
        })
    }

    pub fn gram(&self) -> MatRef<'_, f64> {
        self.gram.as_ref()
    }

    pub fn len(&self) -> usize {
        self.n + self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `S v`: per-block centering followed by the 1/√c, 1/√(1−c) scaling.
    fn apply_s(&self, v: &[f64]) -> Vec<f64> {
        let mean_x = mean(&v[..self.n]);
        let mean_y = mean(&v[self.n..]);
        v.iter()
            .enumerate()
            .map(|(i, &vi)| {
                if i < self.n {
                    self.scale[0] * (vi - mean_x)
                } else {
                    self.scale[1] * (vi - mean_y)
                }
            })
            .collect()
    }

    /// `(S² K / N + λ I) α`.
    fn apply_reduced(&self, alpha: &[f64], lambda: f64) -> Vec<f64> {
        let nf = self.len() as f64;
        let k_alpha = linalg::mat_vec(self.gram.as_ref(), alpha);
        let ssk = self.apply_s(&self.apply_s(&k_alpha));
        ssk.iter()
            .zip(alpha)
            .map(|(a, b)| a / nf + lambda * b)
            .collect()
    }

    /// `α = (ρ − S A⁻¹ S K ρ / N) / λ` with `A = S K S / N + λ I`.
    fn reduced_solve(&self, chol: &Cholesky, rhs: &[f64], lambda: f64) -> Vec<f64> {
        let nf = self.len() as f64;
        let k_rhs = linalg::mat_vec(self.gram.as_ref(), rhs);
        let u = chol.solve(&self.apply_s(&k_rhs));
        let su = self.apply_s(&u);
        rhs.iter()
            .zip(&su)
            .map(|(r, s)| (r - s / nf) / lambda)
            .collect()
    }

    pub fn solve(&self, lambda: f64) -> Result<KfdaSolution> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(WitsError::param("lambda", format!("must be positive, got {lambda}")));
        }
        let total = self.len();
        let a = Mat::from_fn(total, total, |i, j| {
            self.centered[(i, j)] + if i == j { lambda } else { 0.0 }
        });
        let mean_diag = (0..total).map(|i| a[(i, i)]).sum::<f64>() / total as f64;
        let chol = linalg::cholesky_with_jitter(a.as_ref(), JITTER_SCALE * mean_diag)?;

        let mut alpha = self.reduced_solve(&chol, &self.delta, lambda);
        // One step of iterative refinement on the reduced system.
        let reduced_residual: Vec<f64> = self
            .apply_reduced(&alpha, lambda)
            .iter()
            .zip(&self.delta)
            .map(|(ax, d)| d - ax)
            .collect();
        let correction = self.reduced_solve(&chol, &reduced_residual, lambda);
        for (a, c) in alpha.iter_mut().zip(&correction) {
            *a += c;
        }
        if let Some(bad) = alpha.iter().position(|a| !a.is_finite()) {
            return Err(WitsError::Numerical(format!(
                "KFDA coefficient {bad} is not finite (lambda = {lambda:e})"
            )));
        }

        let reduced_residual: Vec<f64> = self
            .apply_reduced(&alpha, lambda)
            .iter()
            .zip(&self.delta)
            .map(|(ax, d)| ax - d)
            .collect();
        let full_residual = linalg::mat_vec(self.gram.as_ref(), &reduced_residual);
        let k_delta_norm = linalg::norm(&self.k_delta);
        let relative_residual = if k_delta_norm > 0.0 {
            linalg::norm(&full_residual) / k_delta_norm
        } else {
            linalg::norm(&full_residual)
        };
        Ok(KfdaSolution {
            coefficients: alpha,
            relative_residual,
            jitter: chol.jitter,
        })
    }

    /// `δᵀ K α`, the training mean difference of the unoriented witness.
    pub fn mean_difference(&self, alpha: &[f64]) -> f64 {
        linalg::dot(&self.k_delta, alpha)
    }
}

/// Stage-I default for `c`: the X share of the training data.
pub fn default_c(n: usize, m: usize) -> f64 {
    n as f64 / (n + m) as f64
}

/// Exact regularized KFDA witness on the pooled training sample.
///
/// `c` defaults to `n_tr / (n_tr + m_tr)`.
pub fn kfda_witness_exact(
    k: &Kernel,
    lambda: f64,
    x_train: &Sample,
    y_train: &Sample,
    c: Option<f64>,
) -> Result<WitnessModel> {
    Ok(kfda_witness_with_diagnostics(k, lambda, x_train, y_train, c)?.0)
}

/// [`kfda_witness_exact`] that also returns the solver diagnostics.
pub fn kfda_witness_with_diagnostics(
    k: &Kernel,
    lambda: f64,
    x_train: &Sample,
    y_train: &Sample,
    c: Option<f64>,
) -> Result<(WitnessModel, KfdaSolution)> {
    if !(lambda > 0.0) {
        return Err(WitsError::param("lambda", format!("must be positive, got {lambda}")));
    }
    x_train.require_nonempty("X_tr")?;
    y_train.require_nonempty("Y_tr")?;
    let basis = x_train.concat(y_train)?;
    let c = c.unwrap_or_else(|| default_c(x_train.len(), y_train.len()));
    let system = KfdaSystem::new(k.gram_symmetric(&basis)?, x_train.len(), c)?;
    let solution = system.solve(lambda)?;
    let orientation = if system.mean_difference(&solution.coefficients) < 0.0 {
        Orientation::Negative
    } else {
        Orientation::Positive
    };
    let model = WitnessModel::new(basis, solution.coefficients.clone(), *k, orientation)?;
    Ok((model, solution))
}

pub(crate) fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Unbiased sample variance.
pub(crate) fn sample_variance(v: &[f64]) -> f64 {
    let mu = mean(v);
    v.iter().map(|x| (x - mu) * (x - mu)).sum::<f64>() / (v.len() - 1) as f64
}

/// Empirical SNR of `h` on `(X, Y)`:
/// `(mean_X h − mean_Y h) / sqrt(var_X h / c + var_Y h / (1 − c) + reg)`.
pub fn empirical_snr(h: &WitnessModel, x: &Sample, y: &Sample, c: f64, reg: f64) -> Result<f64> {
    snr_from_values(&h.evaluate(x)?, &h.evaluate(y)?, c, reg)
}

/// [`empirical_snr`] on precomputed witness values.
pub fn snr_from_values(hx: &[f64], hy: &[f64], c: f64, reg: f64) -> Result<f64> {
    if hx.len() < 2 || hy.len() < 2 {
        return Err(WitsError::param("samples", "SNR needs at least two points per sample"));
    }
    check_c(c)?;
    if !(reg >= 0.0) {
        return Err(WitsError::param("reg", format!("must be nonnegative, got {reg}")));
    }
    let pooled = sample_variance(hx) / c + sample_variance(hy) / (1.0 - c) + reg;
    if pooled <= 0.0 {
        return Err(WitsError::Numerical(
            "witness is constant on the data and reg = 0".into(),
        ));
    }
    Ok((mean(hx) - mean(hy)) / pooled.sqrt())
}

/// Population SNR of `h` under two discrete measures, with
/// `σ_c² = Var_P h / c + Var_Q h / (1 − c)`.
pub fn population_snr(h: &WitnessModel, p: &DiscreteMeasure, q: &DiscreteMeasure, c: f64) -> Result<f64> {
    check_c(c)?;
    let moments = |m: &DiscreteMeasure| -> Result<(f64, f64)> {
        let values = h.evaluate(&m.support)?;
        let mu: f64 = values.iter().zip(&m.weights).map(|(v, w)| v * w).sum();
        let var: f64 = values
            .iter()
            .zip(&m.weights)
            .map(|(v, w)| w * (v - mu) * (v - mu))
            .sum();
        Ok((mu, var))
    };
    let (mp, vp) = moments(p)?;
    let (mq, vq) = moments(q)?;
    let pooled = vp / c + vq / (1.0 - c);
    if pooled <= 0.0 {
        return Err(WitsError::Numerical("witness has zero population variance".into()));
    }
    Ok((mp - mq) / pooled.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mmd_stats;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(rng: &mut ChaCha8Rng, n: usize, shift: f64) -> Sample {
        let data = (0..2 * n).map(|_| rng.random::<f64>() + shift).collect();
        Sample::new(2, data).unwrap()
    }

    /// Dense reference: α = (K N_c K / N + λK + jitter I)⁻¹ K δ via LU.
    fn dense_oracle(k: &Kernel, lambda: f64, x: &Sample, y: &Sample, c: f64) -> Vec<f64> {
        use faer::linalg::solvers::Solve;
        let z = x.concat(y).unwrap();
        let gram = k.gram_symmetric(&z).unwrap();
        let nc = build_centering(x.len(), y.len(), c).unwrap();
        let total = z.len() as f64;
        let system = &gram * &nc * &gram * faer::Scale(1.0 / total) + &gram * faer::Scale(lambda);
        let delta = delta_vector(x.len(), y.len());
        let rhs = &gram * linalg::column(&delta);
        let sol = system.partial_piv_lu().solve(&rhs);
        (0..sol.nrows()).map(|i| sol[(i, 0)]).collect()
    }

    #[test]
    fn mmd_witness_reproduces_v_statistic() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let k = Kernel::gaussian(0.5).unwrap();
        let x = random_sample(&mut rng, 9, 0.0);
        let y = random_sample(&mut rng, 7, 0.2);
        let h = mmd_witness(&k, &x, &y).unwrap();
        let via_witness = h.mean_difference(&x, &y).unwrap();
        let direct = mmd_stats::v_statistic(&k, &x, &y).unwrap();
        assert!((via_witness - direct).abs() < 1e-10);
        assert_eq!(h.orientation(), Orientation::Positive);
    }

    #[test]
    fn single_point_mmd_witness() {
        let k = Kernel::gaussian(1.0).unwrap();
        let x = Sample::from_scalars(&[0.0]);
        let y = Sample::from_scalars(&[1.0]);
        let h = mmd_witness(&k, &x, &y).unwrap();
        for z in [-1.0, 0.2, 3.0] {
            let got = h.evaluate(&Sample::from_scalars(&[z])).unwrap()[0];
            let want = (-(z * z)).exp() - (-(z - 1.0) * (z - 1.0)).exp();
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn mmd_witness_matches_mean_embedding_on_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let k = Kernel::gaussian(0.3).unwrap();
        let x = random_sample(&mut rng, 20, 0.0);
        let y = random_sample(&mut rng, 20, 0.1);
        let h = mmd_witness(&k, &x, &y).unwrap();
        let grid: Vec<[f64; 2]> = (0..25)
            .map(|i| [(i % 5) as f64 * 0.3, (i / 5) as f64 * 0.3])
            .collect();
        let g = Sample::from_rows(&grid).unwrap();
        let values = h.evaluate(&g).unwrap();
        for (z, v) in grid.iter().zip(values) {
            let mu_x: f64 = x.iter().map(|p| k.eval_unchecked(p, z)).sum::<f64>() / 20.0;
            let mu_y: f64 = y.iter().map(|p| k.eval_unchecked(p, z)).sum::<f64>() / 20.0;
            assert!((v - (mu_x - mu_y)).abs() < 1e-14);
        }
    }

    #[test]
    fn centering_examples() {
        let z = build_centering(1, 1, 0.3).unwrap();
        assert!((0..2).all(|i| (0..2).all(|j| z[(i, j)] == 0.0)));
        let nc = build_centering(2, 3, 0.5).unwrap();
        assert_eq!(nc[(0, 0)], 1.0);
        assert_eq!(nc[(0, 1)], -1.0);
        assert_eq!(nc[(0, 2)], 0.0);
        assert!(build_centering(2, 2, 1.0).is_err());
        assert!(build_centering(0, 2, 0.5).is_err());

        // P_5 idempotence, read from the c = 1/2 top block scaled back by 1/2.
        let big = build_centering(5, 1, 0.5).unwrap();
        let p = Mat::from_fn(5, 5, |i, j| 0.5 * big[(i, j)]);
        let pp = &p * &p;
        for i in 0..5 {
            for j in 0..5 {
                assert!((pp[(i, j)] - p[(i, j)]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kfda_degenerate_singletons() {
        let k = Kernel::gaussian(1.0).unwrap();
        let lambda = 0.25;
        let model = kfda_witness_exact(
            &k,
            lambda,
            &Sample::from_scalars(&[0.0]),
            &Sample::from_scalars(&[2.0]),
            None,
        )
        .unwrap();
        assert!((model.coefficients()[0] - 4.0).abs() < 1e-12);
        assert!((model.coefficients()[1] + 4.0).abs() < 1e-12);
    }

    #[test]
    fn kfda_matches_dense_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = Kernel::gaussian(0.8).unwrap();
        let x = random_sample(&mut rng, 15, 0.0);
        let y = random_sample(&mut rng, 15, 0.3);
        let (model, sol) = kfda_witness_with_diagnostics(&k, 1e-2, &x, &y, None).unwrap();
        let oracle = dense_oracle(&k, 1e-2, &x, &y, 0.5);
        let scale = oracle.iter().map(|v| v.abs()).fold(0.0, f64::max);
        for (a, b) in model.coefficients().iter().zip(&oracle) {
            assert!((a - b).abs() <= 1e-6 * scale, "{a} vs {b}");
        }
        assert!(sol.relative_residual <= 1e-8, "{}", sol.relative_residual);
    }

    #[test]
    fn kfda_large_lambda_approaches_mmd_witness() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let k = Kernel::gaussian(0.5).unwrap();
        let x = random_sample(&mut rng, 12, 0.0);
        let y = random_sample(&mut rng, 10, 0.2);
        let lambda = 1e6;
        let model = kfda_witness_exact(&k, lambda, &x, &y, None).unwrap();
        let scaled: Vec<f64> = model.coefficients().iter().map(|a| a * lambda).collect();
        let delta = delta_vector(12, 10);
        let cos = linalg::dot(&scaled, &delta) / (linalg::norm(&scaled) * linalg::norm(&delta));
        assert!(cos >= 0.999, "{cos}");
    }

    #[test]
    fn kfda_rejects_bad_lambda() {
        let x = Sample::from_scalars(&[0.0, 1.0]);
        let k = Kernel::gaussian(1.0).unwrap();
        assert!(kfda_witness_exact(&k, 0.0, &x, &x, None).is_err());
        assert!(kfda_witness_exact(&k, -1.0, &x, &x, None).is_err());
    }

    #[test]
    fn evaluate_examples() {
        let k = Kernel::gaussian(0.5).unwrap();
        let basis = Sample::from_scalars(&[0.0, 1.0]);
        let zero = WitnessModel::new(basis.clone(), vec![0.0, 0.0], k, Orientation::Positive).unwrap();
        assert_eq!(zero.evaluate(&Sample::from_scalars(&[0.3, 5.0])).unwrap(), vec![0.0, 0.0]);
        let one = WitnessModel::new(Sample::from_scalars(&[0.7]), vec![1.0], k, Orientation::Positive).unwrap();
        assert_eq!(one.evaluate(&Sample::from_scalars(&[0.7])).unwrap(), vec![1.0]);
        assert!(one.evaluate(&Sample::from_rows(&[[0.0, 1.0]]).unwrap()).is_err());
        assert!(WitnessModel::new(basis, vec![1.0], k, Orientation::Positive).is_err());
    }

    #[test]
    fn evaluate_matches_double_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let k = Kernel::gaussian(0.4).unwrap();
        let basis = random_sample(&mut rng, 13, 0.0);
        let coefs: Vec<f64> = (0..13).map(|_| rng.random::<f64>() - 0.5).collect();
        let h = WitnessModel::new(basis.clone(), coefs.clone(), k, Orientation::Negative).unwrap();
        let z = random_sample(&mut rng, 8, 0.1);
        let got = h.evaluate(&z).unwrap();
        for (zj, gj) in z.iter().zip(&got) {
            let acc: f64 = basis.iter().zip(&coefs).map(|(b, c)| c * k.eval_unchecked(b, zj)).sum();
            assert!((gj + acc).abs() < 1e-14);
        }
    }

    #[test]
    fn snr_examples() {
        // Constant witness with reg > 0 has zero SNR.
        assert_eq!(snr_from_values(&[2.0, 2.0], &[2.0, 2.0, 2.0], 0.5, 1e-3).unwrap(), 0.0);
        assert!(snr_from_values(&[2.0, 2.0], &[2.0, 2.0], 0.5, 0.0).is_err());
        // Zero variance, unit mean gap, reg = 1e-12: 1 / 1e-6.
        let v = snr_from_values(&[1.0, 1.0], &[0.0, 0.0], 0.5, 1e-12).unwrap();
        assert!((v - 1e6).abs() < 1e-3);
        assert!(snr_from_values(&[1.0], &[0.0, 1.0], 0.5, 0.0).is_err());
    }

    #[test]
    fn split_ratio_rounding() {
        assert!(SplitRatio::new(0.0).is_err());
        assert!(SplitRatio::new(1.0).is_err());
        let half = SplitRatio::new(0.5).unwrap();
        assert_eq!(half.train_size(100), 50);
        assert_eq!(half.train_size(101), 51);
        assert_eq!(SplitRatio::new(0.3).unwrap().train_size(10), 3);
        assert_eq!(SplitRatio::new(0.7).unwrap().train_size(10), 7);
        assert_eq!(SplitRatio::new(0.1).unwrap().train_size(100), 10);
    }

    proptest! {
        #[test]
        fn snr_is_scale_invariant(
            hx in proptest::collection::vec(-5.0f64..5.0, 2..12),
            hy in proptest::collection::vec(-5.0f64..5.0, 2..12),
            gamma in 0.01f64..100.0,
            reg in 0.0f64..1.0,
        ) {
            let var = sample_variance(&hx) + sample_variance(&hy);
            prop_assume!(var > 1e-6);
            let base = snr_from_values(&hx, &hy, 0.5, reg).unwrap();
            let sx: Vec<f64> = hx.iter().map(|v| v * gamma).collect();
            let sy: Vec<f64> = hy.iter().map(|v| v * gamma).collect();
            let scaled = snr_from_values(&sx, &sy, 0.5, reg * gamma * gamma).unwrap();
            prop_assert!((base - scaled).abs() <= 1e-9 * base.abs().max(1.0));
        }

        #[test]
        fn rescaling_never_changes_the_better_witness(
            a in proptest::collection::vec(-5.0f64..5.0, 8),
            b in proptest::collection::vec(-5.0f64..5.0, 8),
            ga in 0.01f64..100.0,
            gb in 0.01f64..100.0,
        ) {
            let snr = |v: &[f64], g: f64| {
                let s: Vec<f64> = v.iter().map(|x| x * g).collect();
                snr_from_values(&s[..4], &s[4..], 0.5, 0.0)
            };
            if let (Ok(sa), Ok(sb)) = (snr(&a, 1.0), snr(&b, 1.0)) {
                prop_assume!((sa - sb).abs() > 1e-9);
                let (ra, rb) = (snr(&a, ga).unwrap(), snr(&b, gb).unwrap());
                prop_assert_eq!(sa > sb, ra > rb);
            }
        }

        #[test]
        fn kfda_witness_is_oriented_and_solves_the_system(
            seed in 0u64..1000,
            n in 2usize..12,
            m in 2usize..12,
            log_lambda in -3.0f64..2.0,
            bw in 0.2f64..2.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_sample(&mut rng, n, 0.0);
            let y = random_sample(&mut rng, m, 0.25);
            let k = Kernel::gaussian(bw).unwrap();
            let (model, sol) =
                kfda_witness_with_diagnostics(&k, 10f64.powf(log_lambda), &x, &y, None).unwrap();
            prop_assert!(model.mean_difference(&x, &y).unwrap() >= -1e-12);
            prop_assert!(sol.relative_residual <= 1e-8, "residual {}", sol.relative_residual);
        }
    }
}
