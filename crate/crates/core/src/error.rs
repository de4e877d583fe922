//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by signal generation, estimation and extraction.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration or arguments: bad dimensions, out-of-range
    /// hyperparameters, malformed files.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// I/O failure while reading or writing signal/matrix files.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Malformed CSV or JSON input.
    #[error("parse error: {0}")]
    Parse(String),

    /// A matrix that must be positive definite is not.
    #[error("positive definiteness violated: {0}")]
    NotPositiveDefinite(String),

    /// A correlation quantity that the method requires to be positive is
    /// zero or negative (e.g. a lag-1 source autocorrelation).
    #[error("positivity assumption violated: {0}")]
    PositivityViolation(String),

    /// A statistic degenerated to (near) zero where a division is required.
    #[error("degenerate statistic: {0}")]
    Degenerate(String),
}

impl Error {
    /// True for failures of a numerical precondition (as opposed to bad
    /// configuration or I/O). The CLI maps these to a distinct exit code.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NotPositiveDefinite(_) | Error::PositivityViolation(_) | Error::Degenerate(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
