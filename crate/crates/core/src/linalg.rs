//! Thin helpers over faer's dense factorizations.

use faer::linalg::triangular_solve;
use faer::{Mat, MatRef, Par, Side};

use crate::error::{Result, WitsError};

/// Number of times the diagonal jitter is multiplied by ten before giving up.
pub const JITTER_ESCALATIONS: usize = 3;

/// Lower Cholesky factor `L` with `A + jitter·I = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct Cholesky {
    pub lower: Mat<f64>,
    pub jitter: f64,
}

/// Cholesky factorization of a symmetric matrix. A plain factorization is
/// attempted first; on failure `base_jitter` is added to the diagonal and
/// multiplied by ten on each further failure, up to [`JITTER_ESCALATIONS`]
/// escalations.
pub fn cholesky_with_jitter(a: MatRef<'_, f64>, base_jitter: f64) -> Result<Cholesky> {
    if let Ok(llt) = a.llt(Side::Lower) {
        return Ok(Cholesky {
            lower: llt.L().to_owned(),
            jitter: 0.0,
        });
    }
    let n = a.nrows();
    let mut jitter = base_jitter.max(f64::MIN_POSITIVE);
    for _ in 0..=JITTER_ESCALATIONS {
        let shifted = Mat::from_fn(n, n, |i, j| a[(i, j)] + if i == j { jitter } else { 0.0 });
        if let Ok(llt) = shifted.llt(Side::Lower) {
            return Ok(Cholesky {
                lower: llt.L().to_owned(),
                jitter,
            });
        }
        jitter *= 10.0;
    }
    Err(WitsError::Numerical(format!(
        "Cholesky factorization failed with jitter up to {:.3e}",
        jitter / 10.0
    )))
}

impl Cholesky {
    /// Solves `(L Lᵀ) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let y = solve_lower(self.lower.as_ref(), b);
        solve_lower_transpose(self.lower.as_ref(), &y)
    }
}

pub fn column(v: &[f64]) -> Mat<f64> {
    Mat::from_fn(v.len(), 1, |i, _| v[i])
}

fn to_vec(m: &Mat<f64>) -> Vec<f64> {
    (0..m.nrows()).map(|i| m[(i, 0)]).collect()
}

/// `L⁻¹ b` for lower-triangular `L`.
pub fn solve_lower(lower: MatRef<'_, f64>, b: &[f64]) -> Vec<f64> {
    let mut x = column(b);
    triangular_solve::solve_lower_triangular_in_place(lower, x.as_mut(), Par::Seq);
    to_vec(&x)
}

/// `L⁻ᵀ b` for lower-triangular `L`.
pub fn solve_lower_transpose(lower: MatRef<'_, f64>, b: &[f64]) -> Vec<f64> {
    let mut x = column(b);
    triangular_solve::solve_upper_triangular_in_place(lower.transpose(), x.as_mut(), Par::Seq);
    to_vec(&x)
}

/// `A x`.
pub fn mat_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.ncols(), x.len());
    let mut out = vec![0.0; a.nrows()];
    for (j, &xj) in x.iter().enumerate() {
        if xj == 0.0 {
            continue;
        }
        let col = a.col(j);
        for (i, o) in out.iter_mut().enumerate() {
            *o += col[i] * xj;
        }
    }
    out
}

/// `Aᵀ x`.
pub fn mat_t_vec(a: MatRef<'_, f64>, x: &[f64]) -> Vec<f64> {
    debug_assert_eq!(a.nrows(), x.len());
    (0..a.ncols())
        .map(|j| {
            let col = a.col(j);
            x.iter().enumerate().map(|(i, &xi)| col[i] * xi).sum()
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
