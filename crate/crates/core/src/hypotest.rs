//! Stage-II tests and the full-data permutation baselines.

use faer::{Mat, Side};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::{erfc, erfc_inv};
use std::f64::consts::SQRT_2;

use crate::error::{Result, WitsError};
use crate::kernel::Kernel;
use crate::parallel;
use crate::sample::Sample;
use crate::witness::{default_c, mean, sample_variance, KfdaSystem, WitnessModel};

/// Permutations per test when not configured otherwise.
pub const DEFAULT_PERMUTATIONS: usize = 200;

/// Relative slack under which a permuted statistic counts as a tie.
pub const TIE_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TestMethod {
    WitnessAnalytic,
    WitnessPermutation,
    MmdBoot,
    KfdaBoot,
}

impl TestMethod {
    pub fn id(self) -> &'static str {
        match self {
            TestMethod::WitnessAnalytic => "witness-analytic",
            TestMethod::WitnessPermutation => "witness-permutation",
            TestMethod::MmdBoot => "mmd-boot",
            TestMethod::KfdaBoot => "kfda-boot",
        }
    }
}

/// How a witness test sets its rejection threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ThresholdMode {
    Analytic,
    #[default]
    Permutation,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub statistic: f64,
    pub p_value: Option<f64>,
    pub threshold: Option<f64>,
    pub reject: bool,
    pub method: TestMethod,
    pub alpha: f64,
    pub num_permutations: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PermutationConfig {
    pub num_permutations: usize,
    pub seed: u64,
    /// Use `(count + 1) / (B + 1)` instead of `count / B`.
    pub plus_one: bool,
}

impl PermutationConfig {
    pub fn new(num_permutations: usize, seed: u64) -> Self {
        Self {
            num_permutations,
            seed,
            plus_one: false,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.num_permutations == 0 {
            return Err(WitsError::param("B", "need at least one permutation"));
        }
        Ok(())
    }

    fn p_value(&self, count: usize) -> f64 {
        if self.plus_one {
            (count + 1) as f64 / (self.num_permutations + 1) as f64
        } else {
            count as f64 / self.num_permutations as f64
        }
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(WitsError::param("alpha", format!("must lie in (0, 1), got {alpha}")));
    }
    Ok(())
}

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse standard normal CDF.
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(WitsError::param("p", format!("must lie in (0, 1), got {p}")));
    }
    Ok(-SQRT_2 * erfc_inv(2.0 * p))
}

/// `1 − Φ(Φ⁻¹(1 − α) − √(n_te + m_te) · snr)`.
pub fn asymptotic_power(snr: f64, n_te: usize, m_te: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if snr.is_nan() {
        return Err(WitsError::param("snr", "is NaN"));
    }
    let z = gaussian_quantile(1.0 - alpha)? - ((n_te + m_te) as f64).sqrt() * snr;
    Ok(gaussian_cdf(-z))
}

/// `√(n + m) (mean_X h − mean_Y h) / σ̂_c` with `c = n / (n + m)` and
/// `σ̂_c² = σ̂_X² / c + σ̂_Y² / (1 − c)`.
pub fn standardized_tau(h: &WitnessModel, x_test: &Sample, y_test: &Sample) -> Result<f64> {
    tau_from_values(&h.evaluate(x_test)?, &h.evaluate(y_test)?)
}

/// [`standardized_tau`] on precomputed witness values.
pub fn tau_from_values(hx: &[f64], hy: &[f64]) -> Result<f64> {
    if hx.len() < 2 || hy.len() < 2 {
        return Err(WitsError::param("test samples", "need at least two points per sample"));
    }
    let total = (hx.len() + hy.len()) as f64;
    let c = hx.len() as f64 / total;
    let pooled = sample_variance(hx) / c + sample_variance(hy) / (1.0 - c);
    if !(pooled > 0.0) {
        return Err(WitsError::Numerical(
            "witness is constant on the test data".into(),
        ));
    }
    Ok(total.sqrt() * (mean(hx) - mean(hy)) / pooled.sqrt())
}

/// One-sided analytic test: reject iff `τ > Φ⁻¹(1 − α)`.
pub fn asymptotic_witness_test(
    h: &WitnessModel,
    x_test: &Sample,
    y_test: &Sample,
    alpha: f64,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    let tau = standardized_tau(h, x_test, y_test)?;
    let threshold = gaussian_quantile(1.0 - alpha)?;
    Ok(TestOutcome {
        statistic: tau,
        p_value: None,
        threshold: Some(threshold),
        reject: tau > threshold,
        method: TestMethod::WitnessAnalytic,
        alpha,
        num_permutations: None,
    })
}

/// Generator for permutation `b` of a test seeded with `seed`.
pub fn permutation_rng(seed: u64, b: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(b as u64);
    rng
}

/// Indices of the pooled sample assigned to X by permutation `b`.
/// All permutation tests draw from this function, so tests with the same seed
/// see the same relabelings.
pub fn permuted_x_indices(seed: u64, b: usize, total: usize, n: usize) -> Vec<usize> {
    let mut rng = permutation_rng(seed, b);
    let mut idx: Vec<usize> = (0..total).collect();
    let (chosen, _) = idx.partial_shuffle(&mut rng, n);
    chosen.to_vec()
}

fn count_at_least<F>(observed: f64, scale: f64, config: &PermutationConfig, stat: F) -> usize
where
    F: Fn(usize) -> f64 + Sync + Send,
{
    let slack = TIE_TOLERANCE * scale;
    parallel::count_range(config.num_permutations, |b| stat(b) >= observed - slack)
}

fn permutation_outcome(
    statistic: f64,
    count: usize,
    config: &PermutationConfig,
    alpha: f64,
    method: TestMethod,
) -> TestOutcome {
    let p = config.p_value(count);
    TestOutcome {
        statistic,
        p_value: Some(p),
        threshold: None,
        reject: p <= alpha,
        method,
        alpha,
        num_permutations: Some(config.num_permutations),
    }
}

/// Permutation test on the unnormalized mean difference of witness values.
pub fn permutation_witness_test(
    h: &WitnessModel,
    x_test: &Sample,
    y_test: &Sample,
    alpha: f64,
    config: &PermutationConfig,
) -> Result<TestOutcome> {
    x_test.require_nonempty("X_te")?;
    y_test.require_nonempty("Y_te")?;
    permutation_test_from_values(&h.evaluate(x_test)?, &h.evaluate(y_test)?, alpha, config)
}

/// [`permutation_witness_test`] on precomputed witness values.
pub fn permutation_test_from_values(
    hx: &[f64],
    hy: &[f64],
    alpha: f64,
    config: &PermutationConfig,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    config.validate()?;
    if hx.is_empty() || hy.is_empty() {
        return Err(WitsError::EmptySample("permutation test needs both test samples"));
    }
    let (n, m) = (hx.len(), hy.len());
    let values: Vec<f64> = hx.iter().chain(hy).copied().collect();
    let total: f64 = values.iter().sum();
    let diff = |sum_x: f64| sum_x / n as f64 - (total - sum_x) / m as f64;
    let observed = diff(hx.iter().sum());
    let scale = values.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let count = count_at_least(observed, scale, config, |b| {
        let idx = permuted_x_indices(config.seed, b, n + m, n);
        diff(idx.iter().map(|&i| values[i]).sum())
    });
    Ok(permutation_outcome(observed, count, config, alpha, TestMethod::WitnessPermutation))
}

/// Membership mask of the permuted X indices.
fn mask(idx: &[usize], total: usize) -> Vec<bool> {
    let mut m = vec![false; total];
    for &i in idx {
        m[i] = true;
    }
    m
}

/// Pooled Gram matrix with row sums, reused across label permutations.
struct PooledGram {
    gram: Mat<f64>,
    row_sums: Vec<f64>,
    total_sum: f64,
    n: usize,
    m: usize,
}

impl PooledGram {
    fn new(k: &Kernel, x: &Sample, y: &Sample) -> Result<Self> {
        x.require_nonempty("X")?;
        y.require_nonempty("Y")?;
        let z = x.concat(y)?;
        let gram = k.gram_symmetric(&z)?;
        let row_sums: Vec<f64> = (0..z.len()).map(|j| gram.col(j).iter().sum()).collect();
        let total_sum = row_sums.iter().sum();
        Ok(Self {
            gram,
            row_sums,
            total_sum,
            n: x.len(),
            m: y.len(),
        })
    }

    /// V-statistic for the split that puts `x_idx` in X.
    fn v_statistic(&self, x_idx: &[usize]) -> f64 {
        let (n, m) = (self.n as f64, self.m as f64);
        let mut xx = 0.0;
        let mut x_all = 0.0;
        for &j in x_idx {
            let col = self.gram.col(j);
            xx += x_idx.iter().map(|&i| col[i]).sum::<f64>();
            x_all += self.row_sums[j];
        }
        let xy = x_all - xx;
        let yy = self.total_sum - 2.0 * xy - xx;
        xx / (n * n) + yy / (m * m) - 2.0 * xy / (n * m)
    }
}

/// MMD-BOOT: V-statistic MMD² with a label-permutation null.
pub fn mmd_boot_test(
    k: &Kernel,
    x: &Sample,
    y: &Sample,
    alpha: f64,
    config: &PermutationConfig,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    config.validate()?;
    let pooled = PooledGram::new(k, x, y)?;
    let total = pooled.n + pooled.m;
    let identity: Vec<usize> = (0..pooled.n).collect();
    let observed = pooled.v_statistic(&identity);
    let scale = pooled.total_sum.abs() / (total * total) as f64;
    let count = count_at_least(observed, scale, config, |b| {
        pooled.v_statistic(&permuted_x_indices(config.seed, b, total, pooled.n))
    });
    Ok(permutation_outcome(observed, count, config, alpha, TestMethod::MmdBoot))
}

/// Fast KFDA-BOOT statistic for `n = m` through an eigendecomposition of the
/// pooled Gram matrix `K = Φ Φᵀ`.
///
/// With `a = Φᵀ 1_X`, `b = Φᵀ 1_Y`, `g = a/n − b/m` and
/// `W = [a/√n, b/√m]`, the statistic is
/// `gᵀ (2Λ/N + λI − (2/N) W Wᵀ)⁻¹ g`, inverted by Woodbury with a `2 × 2` core.
struct SpectralKfda {
    /// `Φᵀ` restricted to the retained eigenpairs, row-major `r × N`.
    phi_t: Vec<Vec<f64>>,
    /// `1 / (2λ_j/N + λ)`.
    inv_diag: Vec<f64>,
    col_total: Vec<f64>,
    n: usize,
    m: usize,
}

impl SpectralKfda {
    fn new(gram: &Mat<f64>, n: usize, m: usize, lambda: f64) -> Result<Self> {
        let total = n + m;
        let eig = gram
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| WitsError::Numerical(format!("eigendecomposition failed: {e:?}")))?;
        let values = eig.S().column_vector();
        let u = eig.U();
        let top = (0..total).map(|j| values[j]).fold(0.0f64, f64::max);
        let mut phi_t = Vec::new();
        let mut inv_diag = Vec::new();
        for j in 0..total {
            let ev = values[j];
            if ev <= 1e-14 * top {
                continue;
            }
            let s = ev.sqrt();
            phi_t.push((0..total).map(|i| u[(i, j)] * s).collect::<Vec<f64>>());
            inv_diag.push(1.0 / (2.0 * ev / total as f64 + lambda));
        }
        let col_total = phi_t.iter().map(|row| row.iter().sum()).collect();
        Ok(Self {
            phi_t,
            inv_diag,
            col_total,
            n,
            m,
        })
    }

    fn statistic(&self, x_idx: &[usize]) -> f64 {
        let (n, m) = (self.n as f64, self.m as f64);
        let two_over_total = 2.0 / (n + m);
        // Accumulators: gᵀD⁻¹g, UᵀD⁻¹g (2), UᵀD⁻¹U (2×2) with U = √(2/N) W.
        let mut gdg = 0.0;
        let mut udg = [0.0f64; 2];
        let mut udu = [[0.0f64; 2]; 2];
        for ((row, &d), &tot) in self.phi_t.iter().zip(&self.inv_diag).zip(&self.col_total) {
            let a: f64 = x_idx.iter().map(|&i| row[i]).sum();
            let b = tot - a;
            let g = a / n - b / m;
            let w = [a / n.sqrt(), b / m.sqrt()];
            gdg += g * d * g;
            for p in 0..2 {
                udg[p] += w[p] * d * g;
                for q in 0..2 {
                    udu[p][q] += w[p] * d * w[q];
                }
            }
        }
        for (g, row) in udg.iter_mut().zip(udu.iter_mut()) {
            *g *= two_over_total.sqrt();
            row.iter_mut().for_each(|v| *v *= two_over_total);
        }
        // (I − UᵀD⁻¹U)⁻¹ in closed form.
        let core = [[1.0 - udu[0][0], -udu[0][1]], [-udu[1][0], 1.0 - udu[1][1]]];
        let det = core[0][0] * core[1][1] - core[0][1] * core[1][0];
        let inv = [[core[1][1] / det, -core[0][1] / det], [-core[1][0] / det, core[0][0] / det]];
        let mut correction = 0.0;
        for p in 0..2 {
            for q in 0..2 {
                correction += udg[p] * inv[p][q] * udg[q];
            }
        }
        gdg + correction
    }
}

/// `δᵀ K α̂` for the split that puts `x_idx` in X, through a full KFDA solve.
fn kfda_statistic_direct(gram: &Mat<f64>, x_idx: &[usize], n: usize, lambda: f64, c: f64) -> Result<f64> {
    let total = gram.nrows();
    let in_x = mask(x_idx, total);
    let order: Vec<usize> = x_idx
        .iter()
        .copied()
        .chain((0..total).filter(|&i| !in_x[i]))
        .collect();
    let permuted = Mat::from_fn(total, total, |i, j| gram[(order[i], order[j])]);
    let system = KfdaSystem::new(permuted, n, c)?;
    let solution = system.solve(lambda)?;
    Ok(system.mean_difference(&solution.coefficients))
}

/// KFDA-BOOT: `⟨μ_X − μ_Y, (Σ̂ + λ)⁻¹ (μ_X − μ_Y)⟩` with a label-permutation
/// null. Balanced samples use a spectral fast path; unbalanced samples re-solve
/// the regularized system for every permutation.
pub fn kfda_boot_test(
    k: &Kernel,
    lambda: f64,
    x: &Sample,
    y: &Sample,
    alpha: f64,
    config: &PermutationConfig,
) -> Result<TestOutcome> {
    check_alpha(alpha)?;
    config.validate()?;
    if !(lambda > 0.0 && lambda.is_finite()) {
        return Err(WitsError::param("lambda", format!("must be positive, got {lambda}")));
    }
    let pooled = PooledGram::new(k, x, y)?;
    let (n, m) = (pooled.n, pooled.m);
    let total = n + m;
    let identity: Vec<usize> = (0..n).collect();

    let (observed, permuted) = if n == m {
        let spectral = SpectralKfda::new(&pooled.gram, n, m, lambda)?;
        let observed = spectral.statistic(&identity);
        let permuted = parallel::map_range(config.num_permutations, |b| {
            spectral.statistic(&permuted_x_indices(config.seed, b, total, n))
        });
        (observed, permuted)
    } else {
        let c = default_c(n, m);
        let observed = kfda_statistic_direct(&pooled.gram, &identity, n, lambda, c)?;
        let permuted = parallel::map_range(config.num_permutations, |b| {
            kfda_statistic_direct(&pooled.gram, &permuted_x_indices(config.seed, b, total, n), n, lambda, c)
        })
        .into_iter()
        .collect::<Result<Vec<f64>>>()?;
        (observed, permuted)
    };
    if !observed.is_finite() {
        return Err(WitsError::Numerical("KFDA-BOOT statistic is not finite".into()));
    }
    let slack = TIE_TOLERANCE * observed.abs();
    let count = permuted.iter().filter(|&&s| s >= observed - slack).count();
    Ok(permutation_outcome(observed, count, config, alpha, TestMethod::KfdaBoot))
}

/// Kolmogorov–Smirnov distance between the empirical distribution of
/// `values` and a continuous CDF.
pub fn ks_distance<F: Fn(f64) -> f64>(values: &[f64], cdf: F) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let f = cdf(v);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}
