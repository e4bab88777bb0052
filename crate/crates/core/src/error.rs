use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("eigenvalue #{index} is {value}; eigenvalues must be strictly positive")]
    NonPositiveEigenvalue { index: usize, value: f64 },

    #[error("basis is not orthogonal (max deviation {deviation:e})")]
    NonOrthogonalBasis { deviation: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("schedule `{schedule}` needs noise statistics ({needed})")]
    MissingNoiseStatistics {
        schedule: &'static str,
        needed: &'static str,
    },

    #[error("oracle returned a non-finite gradient at step {step}")]
    NonFiniteGradient { step: u64 },

    #[error("propagation became non-finite at step {step}")]
    Diverged { step: u64 },

    #[error("schedule does not reduce to the two-step form: {0}")]
    RegimeMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
