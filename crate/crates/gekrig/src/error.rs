//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Response has zero variance, so no covariance direction exists.
    #[error("degenerate response: {0}")]
    DegenerateResponse(String),

    /// `P^T W` in the PLS rotation is numerically singular.
    #[error("singular PLS rotation (condition estimate {cond_estimate:.3e})")]
    SingularRotation { cond_estimate: f64 },

    #[error("invalid kernel: {0}")]
    InvalidKernel(String),

    #[error("unsupported kernel for this operation: {0}")]
    UnsupportedKernel(String),

    /// Cholesky factorization failed even at the maximum nugget.
    #[error("ill-conditioned correlation matrix (condition estimate {cond_estimate:.3e}, nugget reached {nugget:.3e})")]
    IllConditioned { cond_estimate: f64, nugget: f64 },

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("optimization failed: {0}")]
    OptimizationFailed(String),

    /// Augmented correlation system would exceed the configured row cap;
    /// gradient-enhanced systems grow as n(d+1) and quickly exhaust memory.
    #[error("correlation system too large: {rows} rows exceeds cap {cap}")]
    TooLarge { rows: usize, cap: usize },

    #[error("domain error: {0}")]
    DomainError(String),

    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
