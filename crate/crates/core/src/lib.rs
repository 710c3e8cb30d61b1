//! Two-sample testing with learned witness functions.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod data;
pub mod error;
pub mod falkon;
pub mod hypotest;
pub mod kernel;
pub mod linalg;
pub mod mmd_stats;
pub mod modelsel;
pub mod parallel;
pub mod sample;
pub mod witness;

pub use error::{ErrorKind, Result, WitsError};
pub use kernel::Kernel;
pub use sample::Sample;
