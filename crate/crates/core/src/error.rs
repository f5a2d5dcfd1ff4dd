use thiserror::Error;

/// Errors raised by model construction, penalty evaluation, solvers and experiments.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid model: {0}")]
    InvalidSpec(String),

    #[error("design covariance is not positive definite")]
    NotPositiveDefinite,

    #[error("no coercive penalty; box undefined")]
    NoCoercivePenalty,

    #[error("subgradient ambiguity at coordinate {coordinate}; use smooth approximation")]
    SubgradientAmbiguity { coordinate: usize },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system (smallest eigenvalue {smallest_eigenvalue:e})")]
    SingularSystem { smallest_eigenvalue: f64 },

    #[error("singular Jacobian (condition number {condition_number:e})")]
    SingularJacobian { condition_number: f64 },

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error("experiment failed: {failures} of {total} replications failed")]
    TooManyFailures { failures: usize, total: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
