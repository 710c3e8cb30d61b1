//! Point sets stored as contiguous row-major buffers.

use crate::error::{Result, WitsError};

/// An ordered list of points that all share one dimension.
///
/// Points are stored row-major in a single buffer, so `point(i)` is a cheap
/// slice borrow.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    data: Vec<f64>,
    dim: usize,
}

impl Sample {
    /// Builds a sample from a flat row-major buffer.
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(WitsError::param("dim", "points need at least one coordinate"));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(WitsError::DimensionMismatch {
                expected: dim,
                found: data.len() % dim,
            });
        }
        Ok(Self { data, dim })
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let first = rows
            .first()
            .ok_or(WitsError::EmptySample("no rows supplied"))?;
        let dim = first.as_ref().len();
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(WitsError::DimensionMismatch {
                    expected: dim,
                    found: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    /// One-dimensional sample from scalar values.
    pub fn from_scalars(values: &[f64]) -> Self {
        Self {
            data: values.to_vec(),
            dim: 1,
        }
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.data
    }

    /// New sample holding the points at `indices`, in that order.
    pub fn select(&self, indices: &[usize]) -> Sample {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        Sample {
            data,
            dim: self.dim,
        }
    }

    /// `self` followed by `other`.
    pub fn concat(&self, other: &Sample) -> Result<Sample> {
        self.check_dim(other)?;
        let mut data = Vec::with_capacity(self.data.len() + other.data.len());
        data.extend_from_slice(&self.data);
        data.extend_from_slice(&other.data);
        Ok(Sample {
            data,
            dim: self.dim,
        })
    }

    pub(crate) fn check_dim(&self, other: &Sample) -> Result<()> {
        if self.dim != other.dim {
            return Err(WitsError::DimensionMismatch {
                expected: self.dim,
                found: other.dim,
            });
        }
        Ok(())
    }

    pub(crate) fn require_nonempty(&self, what: &'static str) -> Result<()> {
        if self.is_empty() {
            return Err(WitsError::EmptySample(what));
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
