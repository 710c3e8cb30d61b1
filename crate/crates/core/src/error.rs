use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the testing toolkit.
#[derive(Debug, Error)]
pub enum WitsError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("empty sample: {0}")]
    EmptySample(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("Krylov solver broke down at iteration {iteration}: {reason}")]
    CgBreakdown { iteration: usize, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}, column {column}: {reason}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        reason: String,
    },

    #[error("trial {trial} (seed {seed:#018x}): {source}")]
    Trial {
        trial: usize,
        seed: u64,
        #[source]
        source: Box<WitsError>,
    },
}

pub type Result<T, E = WitsError> = std::result::Result<T, E>;

impl WitsError {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        WitsError::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    /// Coarse classification used by the command-line exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            WitsError::InvalidParameter { .. } => ErrorKind::Usage,
            WitsError::DimensionMismatch { .. }
            | WitsError::EmptySample(_)
            | WitsError::Io { .. }
            | WitsError::Parse { .. } => ErrorKind::Data,
            WitsError::Numerical(_) | WitsError::CgBreakdown { .. } => ErrorKind::Numerical,
            WitsError::Trial { source, .. } => source.kind(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Usage,
    Data,
    Numerical,
}
