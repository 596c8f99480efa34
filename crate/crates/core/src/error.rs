use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} variables, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("variable index {index} out of range 1..={nvars}")]
    Index { index: usize, nvars: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("AWGN-pseudoweight is undefined for the all-zero vector")]
    UndefinedWeight,

    #[error("instance too large for exhaustive enumeration: {0}")]
    Resource(String),

    #[error("solver failed: {reason}")]
    SolverFailure {
        reason: String,
        /// Last iterate (or the list of attempted starts), for diagnostics.
        last_iterate: Vec<f64>,
    },

    #[error("sweep failed at every grid point")]
    Sweep,

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn solver(reason: impl Into<String>, last_iterate: Vec<f64>) -> Self {
        Error::SolverFailure {
            reason: reason.into(),
            last_iterate,
        }
    }
}
