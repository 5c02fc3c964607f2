//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Nonlinear iteration exhausted its iteration budget. Carries the step-norm
    /// history and the last iterate so the caller can decide whether the run
    /// was diverging.
    #[error("nonlinear iteration did not converge after {} iterations (last step norm {:.3e})",
            .step_norms.len(), .step_norms.last().copied().unwrap_or(f64::NAN))]
    NonConvergence {
        step_norms: Vec<f64>,
        last_iterate: Vec<f64>,
    },

    #[error("linear solver failure: {0}")]
    SolverFailure(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
