use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix is not positive definite (pivot {index} = {value:e})")]
    NotPositiveDefinite { index: usize, value: f64 },

    #[error(
        "eigenvalue estimation did not converge after {iterations} iterations \
         (best estimates: lambda_min = {lambda_min:e}, lambda_max = {lambda_max:e})"
    )]
    Estimation {
        lambda_min: f64,
        lambda_max: f64,
        iterations: usize,
    },

    #[error("schedule contract violated at k = {k}: {reason}")]
    ScheduleContract { k: usize, reason: String },

    #[error("degenerate parameters: {0}")]
    Degenerate(String),

    #[error("potential monitoring needs a known minimizer and optimal value")]
    MissingGroundTruth,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
