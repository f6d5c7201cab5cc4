use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("coordinate {index} is not finite")]
    NonFinite { index: usize },

    #[error("point is outside the domain: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error(
        "subproblem solver did not converge after {iterations} iterations (residual {residual:e})"
    )]
    Solver { iterations: usize, residual: f64 },

    #[error("no solver for this combination: {0}")]
    Unsupported(String),

    #[error("optimal value is unknown for this instance")]
    MissingOptimalValue,

    #[error("linear system is singular")]
    Singular,

    #[error("run aborted: {0}")]
    Aborted(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> crate::Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::Dimension { expected, got })
        }
    }
}
