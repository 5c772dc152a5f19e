use thiserror::Error;

/// Errors raised by the learning and unlearning primitives.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("noise scale must be positive for this operation (got {0})")]
    ZeroNoise(f64),

    #[error("invalid noise scale {0}: must be finite and nonnegative")]
    InvalidNoise(f64),

    #[error("rho must lie in (0, 1], got {0}")]
    InvalidRho(f64),

    #[error("index {index} out of range 1..={max}")]
    OutOfRange { index: usize, max: usize },

    #[error("tree is full (capacity {0})")]
    TreeFull(usize),

    #[error("tree is empty")]
    TreeEmpty,

    #[error("invalid node id `{0}`")]
    InvalidNode(String),

    #[error("node `{0}` is not a leaf")]
    NotALeaf(String),

    #[error("noisy response missing at node `{0}`")]
    MissingResponse(String),

    #[error("deleting the only remaining point would leave an empty model")]
    EmptyModel,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("unknown row id {0}")]
    UnknownRow(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
