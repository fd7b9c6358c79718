//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter is outside its admissible domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// The principal coefficient vanishes somewhere on the circle.
    #[error("ellipticity violated: {0}")]
    Ellipticity(String),

    /// Mismatched lengths or matrix dimensions.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// Not enough usable samples for a fit.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// An iterative factorization did not converge. No partial results are
    /// returned.
    #[error("numerical failure: {0}")]
    NonConvergence(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code for CLI use: 2 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::NonConvergence(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
