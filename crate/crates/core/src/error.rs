use thiserror::Error;

/// Errors produced by the numerical routines of this crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("(kappa={kappa}, gamma={gamma}) lies outside the MLE existence region: {reason}")]
    OutsideExistenceRegion {
        kappa: f64,
        gamma: f64,
        reason: String,
    },

    #[error("root bracket expansion failed; last bracket [{lo}, {hi}]")]
    BracketFailure { lo: f64, hi: f64 },

    #[error("covariance matrix is not positive semidefinite")]
    NotPsd,

    #[error("data are perfectly separated; the MLE does not exist")]
    Separated,

    #[error("matrix is singular")]
    Singular,

    #[error("simplex cycling guard tripped after {0} pivots")]
    LpCycling(usize),

    #[error("probe frontier never crossed the threshold up to kappa={kappa_max}")]
    FrontierNotReached { kappa_max: f64 },

    #[error("full data are separated; ProbeFrontier requires an existing MLE")]
    FullDataSeparated,

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
