use thiserror::Error;

/// Errors surfaced by policy construction, updates, and serialization.
#[derive(Debug, Error)]
pub enum Error {
    /// A probability vector does not sum to 1 within tolerance.
    #[error("distribution not normalized: sum = {sum} (|sum - 1| > {tolerance})")]
    NotNormalized { sum: f64, tolerance: f64 },

    /// A probability entry is negative.
    #[error("negative probability {value} at row {row}, column {col}")]
    NegativeProbability { row: usize, col: usize, value: f64 },

    /// A strictly-positive policy was given a zero (or subnormal-zero) entry.
    #[error("zero probability at prompt {prompt}, response {response}; strictly positive rows required")]
    ZeroProbability { prompt: usize, response: usize },

    /// Dimension or shape mismatch between two objects that must agree.
    #[error("shape mismatch: {context} (expected {expected}, got {got})")]
    ShapeMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    /// A feature vector violates the unit-ball bound.
    #[error("feature vector at prompt {prompt}, response {response} has norm {norm} > 1")]
    FeatureNormBound { prompt: usize, response: usize, norm: f64 },

    /// A parameter vector violates the class radius.
    #[error("parameter norm {norm} exceeds class radius {radius}")]
    OutOfClass { norm: f64, radius: f64 },

    /// Margin is undefined for a single-response space.
    #[error("margin undefined: response space has a single element")]
    UndefinedMargin,

    /// Finite-class ERM given an empty class.
    #[error("empty hypothesis class")]
    EmptyClass,

    /// Finite-class ERM given a class beyond the enumeration limit.
    #[error("hypothesis class of size {size} exceeds enumeration limit {limit}")]
    ClassTooLarge { size: usize, limit: usize },

    /// A scalar parameter is outside its admissible range.
    #[error("invalid parameter {name} = {value}: must satisfy {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },

    /// Text-format parse failure (line numbers are 1-based).
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
