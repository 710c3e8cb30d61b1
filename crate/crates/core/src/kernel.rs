//! Positive-definite kernels and Gram matrices.
//!
//! The Gaussian kernel uses the convention
//!
//! ```text
//! k_σ(x, x') = exp(-‖x - x'‖² / σ²)
//! ```
//!
//! i.e. the squared distance is divided by σ², not 2σ². Bandwidths copied
//! from code that uses the 2σ² form must be multiplied by √2 to describe the
//! same kernel.

use faer::Mat;

use crate::error::{Result, WitsError};
use crate::parallel;
use crate::sample::{squared_distance, Sample};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    /// `exp(-‖x - y‖² / bandwidth²)`.
    Gaussian { bandwidth: f64 },
    /// `⟨x, y⟩`. Finite-dimensional; used for closed-form checks.
    Linear,
}

impl Kernel {
    pub fn gaussian(bandwidth: f64) -> Result<Self> {
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(WitsError::param(
                "bandwidth",
                format!("must be positive and finite, got {bandwidth}"),
            ));
        }
        Ok(Kernel::Gaussian { bandwidth })
    }

    pub fn bandwidth(&self) -> Option<f64> {
        match *self {
            Kernel::Gaussian { bandwidth } => Some(bandwidth),
            Kernel::Linear => None,
        }
    }

    /// Kernel value without a dimension check; callers guarantee equal lengths.
    #[inline]
    pub fn eval_unchecked(&self, x: &[f64], y: &[f64]) -> f64 {
        match *self {
            Kernel::Gaussian { bandwidth } => {
                (-squared_distance(x, y) / (bandwidth * bandwidth)).exp()
            }
            Kernel::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        }
    }

    pub fn eval(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        if x.len() != y.len() {
            return Err(WitsError::DimensionMismatch {
                expected: x.len(),
                found: y.len(),
            });
        }
        Ok(self.eval_unchecked(x, y))
    }

    /// Dense `|a| × |b|` matrix of kernel values.
    pub fn gram(&self, a: &Sample, b: &Sample) -> Result<Mat<f64>> {
        a.require_nonempty("gram matrix rows")?;
        b.require_nonempty("gram matrix columns")?;
        a.check_dim(b)?;
        let columns = parallel::map_range(b.len(), |j| {
            let bj = b.point(j);
            a.iter()
                .map(|ai| self.eval_unchecked(ai, bj))
                .collect::<Vec<_>>()
        });
        Ok(Mat::from_fn(a.len(), b.len(), |i, j| columns[j][i]))
    }

    /// Gram matrix of a sample with itself. Only the upper triangle is
    /// evaluated; the lower one is mirrored, so the result is exactly
    /// symmetric.
    pub fn gram_symmetric(&self, a: &Sample) -> Result<Mat<f64>> {
        a.require_nonempty("gram matrix")?;
        let n = a.len();
        let columns = parallel::map_range(n, |j| {
            let aj = a.point(j);
            (0..=j)
                .map(|i| self.eval_unchecked(a.point(i), aj))
                .collect::<Vec<_>>()
        });
        Ok(Mat::from_fn(n, n, |i, j| {
            if i <= j {
                columns[j][i]
            } else {
                columns[i][j]
            }
        }))
    }
}

/// `count` Gaussian kernels with bandwidths evenly spaced in log10 between
/// `10^log10_min` and `10^log10_max`, both endpoints included.
pub fn bandwidth_grid(log10_min: f64, log10_max: f64, count: usize) -> Result<Vec<Kernel>> {
    log_space(log10_min, log10_max, count)?
        .into_iter()
        .map(Kernel::gaussian)
        .collect()
}

/// Values `10^e` for `count` exponents evenly spaced over the closed range.
pub fn log_space(log10_min: f64, log10_max: f64, count: usize) -> Result<Vec<f64>> {
    if count == 0 {
        return Err(WitsError::param("count", "grid needs at least one value"));
    }
    if !(log10_min <= log10_max) {
        return Err(WitsError::param(
            "log10_min",
            format!("{log10_min} exceeds log10_max {log10_max}"),
        ));
    }
    if count == 1 {
        return Ok(vec![10f64.powf(log10_min)]);
    }
    let step = (log10_max - log10_min) / (count - 1) as f64;
    Ok((0..count)
        .map(|i| {
            let e = if i + 1 == count {
                log10_max
            } else {
                log10_min + step * i as f64
            };
            10f64.powf(e)
        })
        .collect())
}

/// Median of all pairwise Euclidean distances within `z`.
pub fn median_heuristic_bandwidth(z: &Sample) -> Result<f64> {
    if z.len() < 2 {
        return Err(WitsError::param(
            "sample",
            "median heuristic needs at least two points",
        ));
    }
    let n = z.len();
    let mut distances = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            distances.push(squared_distance(z.point(i), z.point(j)).sqrt());
        }
    }
    let mid = distances.len() / 2;
    let median = if distances.len() % 2 == 1 {
        *distances.select_nth_unstable_by(mid, f64::total_cmp).1
    } else {
        let (lower, upper, _) = distances.select_nth_unstable_by(mid, f64::total_cmp);
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + *upper)
    };
    if median <= 0.0 {
        return Err(WitsError::Numerical(
            "median pairwise distance is zero (points coincide)".into(),
        ));
    }
    Ok(median)
}
