use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("simplex exceeded its pivot budget after {pivots} pivots")]
    Cycling { pivots: usize },

    #[error("constraint system is infeasible")]
    Infeasible,

    #[error("region is empty")]
    EmptyRegion,

    #[error("polytope is empty")]
    EmptyPolytope,

    #[error("region is unbounded")]
    UnboundedRegion,

    #[error("polytope is unbounded along the requested direction")]
    UnboundedPolytope,

    #[error("iterative solver did not converge (gap {gap:.3e} after {iterations} iterations)")]
    Convergence { gap: f64, iterations: usize },

    #[error("row {row} has zero norm")]
    ZeroRow { row: usize },

    #[error("internal consistency check failed: {0}")]
    Consistency(String),

    #[error("non-finite value encountered at iteration {iter}")]
    NonFinite { iter: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by bad user input rather than a numerical failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::Dimension(_) | Error::Invalid(_) | Error::Parse(_))
    }
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
