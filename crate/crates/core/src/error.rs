use thiserror::Error;

/// Errors raised by the geometry, oracle, optimizer and diagnostic layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("tangent vectors are based at different points")]
    BaseMismatch,

    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),

    #[error("cannot place a zero vector on the sphere")]
    ZeroNorm,

    #[error("points are antipodal (<x, y> = {inner}); the geodesic is not unique")]
    Antipodal { inner: f64 },

    #[error("retraction is degenerate: |x + v| = {norm}")]
    DegenerateRetraction { norm: f64 },

    #[error("component index {index} out of range for n = {n}")]
    IndexOutOfRange { index: usize, n: usize },

    #[error("empty sample set")]
    EmptyBatch,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("power iteration did not converge after {iterations} iterations")]
    NoConvergence { iterations: usize },

    #[error("probe has no informative samples: {0}")]
    NoInformation(String),

    #[error("usage: {0}")]
    Usage(String),

    #[error("i/o: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
