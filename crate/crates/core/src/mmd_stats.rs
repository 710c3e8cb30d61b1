//! Maximum mean discrepancy estimators and the variance-normalized kernel
//! selection criterion `J = MMD² / σ_H1`.
//!
//! The U-statistic family works on paired samples `(xᵢ, yᵢ)` through
//!
//! ```text
//! H_ij = k(xᵢ,xⱼ) + k(yᵢ,yⱼ) − k(xᵢ,yⱼ) − k(xⱼ,yᵢ)
//! ```
//!
//! and normalizes by `n(n−1)`, the unbiased choice.

use faer::Mat;

use crate::error::{Result, WitsError};
use crate::kernel::Kernel;
use crate::sample::Sample;

/// Default additive guard inside the square root of `J`.
pub const DEFAULT_J_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    VStatistic,
    UStatistic,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdEstimate {
    pub value: f64,
    pub estimator: Estimator,
}

/// MMD² with the requested estimator. The U-statistic needs `|X| = |Y|`.
pub fn mmd(k: &Kernel, x: &Sample, y: &Sample, estimator: Estimator) -> Result<MmdEstimate> {
    let value = match estimator {
        Estimator::VStatistic => v_statistic(k, x, y)?,
        Estimator::UStatistic => u_statistic(k, x, y)?,
    };
    Ok(MmdEstimate { value, estimator })
}

/// Biased (V-statistic) MMD², the squared RKHS distance of the empirical
/// mean embeddings.
pub fn v_statistic(k: &Kernel, x: &Sample, y: &Sample) -> Result<f64> {
    x.require_nonempty("X")?;
    y.require_nonempty("Y")?;
    x.check_dim(y)?;
    let kxx = k.gram_symmetric(x)?;
    let kyy = k.gram_symmetric(y)?;
    let kxy = k.gram(x, y)?;
    Ok(v_statistic_from_blocks(&kxx, &kyy, &kxy))
}

pub fn v_statistic_from_blocks(kxx: &Mat<f64>, kyy: &Mat<f64>, kxy: &Mat<f64>) -> f64 {
    let n = kxx.nrows() as f64;
    let m = kyy.nrows() as f64;
    mat_sum(kxx) / (n * n) + mat_sum(kyy) / (m * m) - 2.0 * mat_sum(kxy) / (n * m)
}

fn mat_sum(a: &Mat<f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.col(j).iter().sum::<f64>())
        .sum()
}

fn check_paired(x: &Sample, y: &Sample, min: usize) -> Result<()> {
    x.check_dim(y)?;
    if x.len() != y.len() {
        return Err(WitsError::param(
            "samples",
            format!("paired estimator needs |X| = |Y|, got {} and {}", x.len(), y.len()),
        ));
    }
    if x.len() < min {
        return Err(WitsError::param(
            "samples",
            format!("paired estimator needs at least {min} pairs, got {}", x.len()),
        ));
    }
    Ok(())
}

/// The paired `H` matrix. Its diagonal is kept but never used by the
/// U-statistics.
pub fn h_matrix(k: &Kernel, x: &Sample, y: &Sample) -> Result<Mat<f64>> {
    check_paired(x, y, 1)?;
    let kxx = k.gram_symmetric(x)?;
    let kyy = k.gram_symmetric(y)?;
    let kxy = k.gram(x, y)?;
    Ok(h_from_blocks(&kxx, &kyy, &kxy))
}

pub fn h_from_blocks(kxx: &Mat<f64>, kyy: &Mat<f64>, kxy: &Mat<f64>) -> Mat<f64> {
    let n = kxx.nrows();
    Mat::from_fn(n, n, |i, j| {
        kxx[(i, j)] + kyy[(i, j)] - kxy[(i, j)] - kxy[(j, i)]
    })
}

/// Unbiased MMD² over paired samples.
pub fn u_statistic(k: &Kernel, x: &Sample, y: &Sample) -> Result<f64> {
    check_paired(x, y, 2)?;
    Ok(u_statistic_from_h(&h_matrix(k, x, y)?))
}

pub fn u_statistic_from_h(h: &Mat<f64>) -> f64 {
    let n = h.nrows();
    let off_diagonal: f64 = (0..n)
        .map(|j| (0..n).filter(|&i| i != j).map(|i| h[(i, j)]).sum::<f64>())
        .sum();
    off_diagonal / (n * (n - 1)) as f64
}

/// Plug-in estimate of the asymptotic variance `σ²_H1` of the U-statistic
/// under the alternative, floored at zero.
pub fn sigma_h1_squared(k: &Kernel, x: &Sample, y: &Sample) -> Result<f64> {
    check_paired(x, y, 3)?;
    Ok(sigma_h1_squared_from_h(&h_matrix(k, x, y)?))
}

pub fn sigma_h1_squared_from_h(h: &Mat<f64>) -> f64 {
    let n = h.nrows();
    let nf = n as f64;
    let mut pair_sum = 0.0;
    let mut triple_sum = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        let mut row_sq = 0.0;
        for j in (0..n).filter(|&j| j != i) {
            let v = h[(i, j)];
            row += v;
            row_sq += v * v;
        }
        pair_sum += row;
        // Σ_{j≠l, both ≠ i} H_ij H_il
        triple_sum += row * row - row_sq;
    }
    let mean_pair = pair_sum / (nf * (nf - 1.0));
    let mean_triple = triple_sum / (nf * (nf - 1.0) * (nf - 2.0));
    (4.0 * (mean_triple - mean_pair * mean_pair)).max(0.0)
}

/// `J = MMD²_u / sqrt(σ²_H1 + eps)`.
pub fn j_criterion(k: &Kernel, x: &Sample, y: &Sample, eps: f64) -> Result<f64> {
    check_paired(x, y, 3)?;
    Ok(j_from_h(&h_matrix(k, x, y)?, eps))
}

pub fn j_from_h(h: &Mat<f64>, eps: f64) -> f64 {
    let numerator = u_statistic_from_h(h);
    let variance = sigma_h1_squared_from_h(h) + eps;
    if numerator == 0.0 {
        return 0.0;
    }
    numerator / variance.sqrt()
}

/// A finitely supported probability measure: weighted support points.
#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub support: Sample,
    pub weights: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn new(support: Sample, weights: Vec<f64>) -> Result<Self> {
        support.require_nonempty("measure support")?;
        if weights.len() != support.len() {
            return Err(WitsError::param(
                "weights",
                format!("{} weights for {} support points", weights.len(), support.len()),
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0)) {
            return Err(WitsError::param("weights", "weights must be nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(WitsError::param("weights", "weights sum to zero"));
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self { support, weights })
    }

    /// Uniform weights over the points of an empirical sample.
    pub fn empirical(sample: Sample) -> Result<Self> {
        let n = sample.len();
        Self::new(sample, vec![1.0; n])
    }
}

/// Population `MMD²`, `σ²_H1` and `J` of two discrete measures, computed by
/// enumerating the product measure of independent pairs `(x, y) ~ P × Q`.
#[derive(Debug, Clone, Copy)]
pub struct PopulationCriterion {
    pub mmd_squared: f64,
    pub sigma_h1_squared: f64,
    pub j: f64,
}

pub fn population_criterion(
    k: &Kernel,
    p: &DiscreteMeasure,
    q: &DiscreteMeasure,
) -> Result<PopulationCriterion> {
    p.support.check_dim(&q.support)?;
    // Enumerate pair atoms (x_a, y_b) with probability p_a q_b.
    let mut atoms = Vec::with_capacity(p.weights.len() * q.weights.len());
    for (a, &wa) in p.weights.iter().enumerate() {
        for (b, &wb) in q.weights.iter().enumerate() {
            atoms.push((p.support.point(a), q.support.point(b), wa * wb));
        }
    }
    let h = |s: &(&[f64], &[f64], f64), t: &(&[f64], &[f64], f64)| {
        k.eval_unchecked(s.0, t.0) + k.eval_unchecked(s.1, t.1)
            - k.eval_unchecked(s.0, t.1)
            - k.eval_unchecked(t.0, s.1)
    };
    let mut mean_h = 0.0;
    let mut mean_h12_h13 = 0.0;
    for s in &atoms {
        let conditional: f64 = atoms.iter().map(|t| t.2 * h(s, t)).sum();
        mean_h += s.2 * conditional;
        mean_h12_h13 += s.2 * conditional * conditional;
    }
    let sigma_h1_squared = 4.0 * (mean_h12_h13 - mean_h * mean_h);
    Ok(PopulationCriterion {
        mmd_squared: mean_h,
        sigma_h1_squared,
        j: mean_h / sigma_h1_squared.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_sample(rng: &mut ChaCha8Rng, n: usize, d: usize, shift: f64) -> Sample {
        let data = (0..n * d).map(|_| rng.random::<f64>() + shift).collect();
        Sample::new(d, data).unwrap()
    }

    #[test]
    fn v_statistic_examples() {
        let k = Kernel::gaussian(0.6).unwrap();
        let x = Sample::from_rows(&[[0.0, 1.0], [0.3, -0.2], [1.0, 1.0]]).unwrap();
        assert!(v_statistic(&k, &x, &x).unwrap().abs() < 1e-12);
        let a = Sample::from_rows(&[[0.2, 0.1]]).unwrap();
        let b = Sample::from_rows(&[[0.5, -0.3]]).unwrap();
        let d2 = 0.3f64.powi(2) + 0.4f64.powi(2);
        let expected = 2.0 - 2.0 * (-d2 / 0.36).exp();
        assert!((v_statistic(&k, &a, &b).unwrap() - expected).abs() < 1e-14);
        assert!(v_statistic(&k, &Sample::new(2, vec![]).unwrap(), &a).is_err());
        assert!(v_statistic(&k, &Sample::from_scalars(&[1.0]), &a).is_err());
    }

    #[test]
    fn u_statistic_examples() {
        let k = Kernel::gaussian(1.0).unwrap();
        let same = Sample::from_scalars(&[0.5, 0.5, 0.5]);
        assert_eq!(u_statistic(&k, &same, &same).unwrap(), 0.0);

        let x = Sample::from_scalars(&[0.0, 1.0]);
        let y = Sample::from_scalars(&[0.5, 2.0]);
        let kv = |a: f64, b: f64| (-(a - b) * (a - b)).exp();
        let h12 = kv(0.0, 1.0) + kv(0.5, 2.0) - kv(0.0, 2.0) - kv(1.0, 0.5);
        assert!((u_statistic(&k, &x, &y).unwrap() - h12).abs() < 1e-15);

        assert!(u_statistic(&k, &x, &Sample::from_scalars(&[1.0])).is_err());
        assert!(u_statistic(&k, &Sample::from_scalars(&[1.0]), &Sample::from_scalars(&[2.0])).is_err());
    }

    #[test]
    fn u_statistic_matches_pair_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let k = Kernel::gaussian(0.7).unwrap();
        let x = random_sample(&mut rng, 10, 2, 0.0);
        let y = random_sample(&mut rng, 10, 2, 0.3);
        let kv = |a: &[f64], b: &[f64]| k.eval_unchecked(a, b);
        let mut sum = 0.0;
        for i in 0..10 {
            for j in 0..10 {
                if i != j {
                    sum += kv(x.point(i), x.point(j)) + kv(y.point(i), y.point(j))
                        - kv(x.point(i), y.point(j))
                        - kv(x.point(j), y.point(i));
                }
            }
        }
        let oracle = sum / 90.0;
        assert!((u_statistic(&k, &x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn sigma_h1_examples() {
        let k = Kernel::gaussian(1.0).unwrap();
        let x = Sample::from_scalars(&[0.0; 5]);
        let y = Sample::from_scalars(&[1.0; 5]);
        assert_eq!(sigma_h1_squared(&k, &x, &y).unwrap(), 0.0);
        assert!(sigma_h1_squared(&k, &Sample::from_scalars(&[0.0, 1.0]), &Sample::from_scalars(&[0.0, 1.0])).is_err());

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let x = random_sample(&mut rng, 50, 2, 0.0);
        let y = random_sample(&mut rng, 50, 2, 1.5);
        assert!(sigma_h1_squared(&Kernel::gaussian(0.5).unwrap(), &x, &y).unwrap() > 0.0);
    }

    #[test]
    fn sigma_h1_matches_triple_enumeration() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let k = Kernel::gaussian(0.9).unwrap();
        let x = random_sample(&mut rng, 6, 3, 0.0);
        let y = random_sample(&mut rng, 6, 3, 0.4);
        let h = h_matrix(&k, &x, &y).unwrap();
        let n = 6;
        let (mut pairs, mut triples) = (0.0, 0.0);
        for i in 0..n {
            for j in 0..n {
                if j == i {
                    continue;
                }
                pairs += h[(i, j)];
                for l in 0..n {
                    if l != i && l != j {
                        triples += h[(i, j)] * h[(i, l)];
                    }
                }
            }
        }
        let mp = pairs / 30.0;
        let oracle = (4.0 * (triples / 120.0 - mp * mp)).max(0.0);
        assert!((sigma_h1_squared(&k, &x, &y).unwrap() - oracle).abs() < 1e-12);
    }

    #[test]
    fn j_examples() {
        let k = Kernel::gaussian(1.0).unwrap();
        let same = Sample::from_scalars(&[0.3; 4]);
        assert_eq!(j_criterion(&k, &same, &same, DEFAULT_J_EPS).unwrap(), 0.0);

        // Scaling the kernel by γ scales H by γ, so J is unchanged when eps = 0.
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = random_sample(&mut rng, 12, 2, 0.0);
        let y = random_sample(&mut rng, 12, 2, 0.5);
        let h = h_matrix(&Kernel::gaussian(0.4).unwrap(), &x, &y).unwrap();
        let base = j_from_h(&h, 0.0);
        for gamma in [0.01, 3.0, 250.0] {
            let scaled = Mat::from_fn(12, 12, |i, j| gamma * h[(i, j)]);
            assert!((j_from_h(&scaled, 0.0) - base).abs() < 1e-10 * base.abs().max(1.0));
        }
    }

    #[test]
    fn v_statistic_equals_u_statistic_plus_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let k = Kernel::gaussian(0.8).unwrap();
        for n in 2..=10 {
            let x = random_sample(&mut rng, n, 2, 0.0);
            let y = random_sample(&mut rng, n, 2, 0.2);
            let v = v_statistic(&k, &x, &y).unwrap();
            let u = u_statistic(&k, &x, &y).unwrap();
            let nf = n as f64;
            let diag: f64 = (0..n)
                .map(|i| {
                    k.eval_unchecked(x.point(i), x.point(i)) + k.eval_unchecked(y.point(i), y.point(i))
                        - 2.0 * k.eval_unchecked(x.point(i), y.point(i))
                })
                .sum();
            // Σ_{i,j} H_ij = n² V, and Σ_{i≠j} H_ij = n(n−1) U.
            let reconstructed = (nf - 1.0) / nf * u + diag / (nf * nf);
            assert!((v - reconstructed).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn discrete_measure_validation() {
        let s = Sample::from_scalars(&[0.0, 1.0]);
        assert!(DiscreteMeasure::new(s.clone(), vec![1.0]).is_err());
        assert!(DiscreteMeasure::new(s.clone(), vec![-1.0, 2.0]).is_err());
        let m = DiscreteMeasure::new(s, vec![1.0, 3.0]).unwrap();
        assert_eq!(m.weights, vec![0.25, 0.75]);
    }
}
