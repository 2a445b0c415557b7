use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("matrix is not symmetric positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("estimated density at {point:?} is below the floor (log density {log_density:.3})")]
    DensityFloor { point: Vec<f64>, log_density: f64 },

    #[error("unsupported derivative order {0} (supported: 0..=6)")]
    UnsupportedOrder(usize),

    #[error("sample covariance is singular")]
    SingularCovariance,

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code used by the command-line front end: 1 for
    /// validation problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DensityFloor { .. } | Error::Numerical(_) | Error::SingularCovariance => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
