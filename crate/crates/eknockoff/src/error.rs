//! Error types shared across the crate.

use thiserror::Error;

/// Errors produced by the selection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed caller input: shape mismatches, out-of-range parameters,
    /// non-finite values.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Not enough rows to perform the requested estimation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A numerical routine failed: divergence, a singular system, or a
    /// factorization that could not be completed.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// Construction of a sampler or covariance model failed validation.
    #[error("construction failed: {0}")]
    Construction(String),

    /// The requested operation is not defined for the given statistic kind.
    #[error("unsupported statistic: {0}")]
    UnsupportedStatistic(String),

    /// An internal invariant was violated.
    #[error("internal error: {0}")]
    Internal(String),
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Prefixes the message with additional context, keeping the variant.
    pub fn with_context(self, context: &str) -> Self {
        match self {
            Error::InvalidInput(m) => Error::InvalidInput(format!("{context}: {m}")),
            Error::InsufficientData(m) => Error::InsufficientData(format!("{context}: {m}")),
            Error::Numerical(m) => Error::Numerical(format!("{context}: {m}")),
            Error::Construction(m) => Error::Construction(format!("{context}: {m}")),
            Error::UnsupportedStatistic(m) => {
                Error::UnsupportedStatistic(format!("{context}: {m}"))
            }
            Error::Internal(m) => Error::Internal(format!("{context}: {m}")),
        }
    }
}
