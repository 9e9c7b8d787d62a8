use thiserror::Error;

/// Errors raised by the library. Coordinates and indices are 0-based.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("value out of domain at (row {row}, col {col}): {msg}")]
    Domain { row: usize, col: usize, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("eigen-solver failed: {0}")]
    Convergence(String),

    #[error("degenerate embedding row {row}")]
    DegenerateRow { row: usize },

    #[error("empty cluster: {0}")]
    EmptyCluster(String),

    #[error("feature {feature} is not testable (non-positive estimate)")]
    NotTestable { feature: usize },

    #[error("no testable features in the requested set")]
    NoTestableFeatures,

    #[error("item matrix is rank deficient (sigma_K / sigma_1 = {ratio:e})")]
    RankDeficient { ratio: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("operation requires the {expected} family, got {found}")]
    Family { expected: String, found: String },
}

pub type Result<T> = std::result::Result<T, Error>;
