use alloc::string::String;

/// Errors raised by the estimation, learning and generation routines.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid dataset: {0}")]
    InvalidData(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not positive definite after jitter escalation (last jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },
    #[error("singular system: {0}")]
    Singular(String),
    #[error("solver did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },
    #[error("perfect separation detected (|theta| = {norm:e})")]
    Separation { norm: f64 },
    #[error("predictor failure: {0}")]
    Predictor(String),
}

pub type Result<T> = core::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
