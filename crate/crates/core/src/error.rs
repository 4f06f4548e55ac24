use thiserror::Error;

/// Errors raised by constraint handling, the hard-constraint layer and the
/// training machinery.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),

    #[error("point violates constraint {index}: h = {value:e}")]
    NotInterior { index: usize, value: f64 },

    #[error("quadratic constraint is not positive semidefinite along the ray (r^T P r = {0:e})")]
    NotPsd(f64),

    #[error("no interior point with margin {margin:e} after {iters} iterations (best max h = {best:e})")]
    InteriorPointNotFound { margin: f64, iters: usize, best: f64 },

    #[error("constraint set is empty: {0}")]
    Infeasible(String),

    #[error("ray bound is infinite: direction is unbounded in the feasible set")]
    Unbounded,

    #[error("zero ray: the boundary point is undefined for r = 0")]
    ZeroRay,

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("singular value decomposition failed to converge")]
    SvdFailed,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("json: {0}")]
    Json(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
