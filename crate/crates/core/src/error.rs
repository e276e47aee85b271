use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("matrix is not positive definite (pivot or eigenvalue {0:.3e}); raise mu to stabilize the gram matrix")]
    NotPositiveDefinite(f64),
    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPsd(f64),
    #[error("symmetric eigensolver did not converge")]
    EigenNoConvergence,
    #[error("prox step too large: step * delta = {0} > 1")]
    StepTooLarge(f64),
    #[error("perspective parameters are not admissible (lambda_min(G - diag(delta)) = {0:.3e})")]
    NotAdmissible(f64),
    #[error("mu must be positive for this construction")]
    MuZero,
    #[error("problem too large for exhaustive enumeration: p = {p} > {cap}")]
    TooLarge { p: usize, cap: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error("parse error: {0}")]
    Parse(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
