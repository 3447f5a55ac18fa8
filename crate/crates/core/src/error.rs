use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error("reference channel has zero Frobenius norm; NMSE is undefined")]
    ZeroNormReference,

    #[error("grid index {index} out of range for resolution {resolution}")]
    IndexOutOfRange { index: usize, resolution: usize },

    #[error("angle {angle} outside grid range [{min}, {max})")]
    AngleOutOfRange { angle: f64, min: f64, max: f64 },

    #[error("dictionary needs {required} bytes, exceeding the budget of {budget} bytes")]
    ResourceLimit { required: u64, budget: u64 },

    #[error("non-finite gradient in parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("backward called before a recorded training-mode forward pass")]
    NoForwardPass,

    #[error("batch normalization needs at least 2 rows in training mode, got {0}")]
    BatchTooSmall(usize),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("model is in {actual} mode, operation requires {expected} mode")]
    ModeMismatch {
        expected: &'static str,
        actual: &'static str,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("sample sets differ in cardinality ({a} vs {b}); exact assignment needs equal sizes")]
    CardinalityMismatch { a: usize, b: usize },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error("line {line}, column {column}: {message}")]
    Spec {
        line: usize,
        column: usize,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures while decoding one of the binary file formats.
#[derive(Debug, Error)]
pub enum FormatError {
    #[error("bad magic bytes: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported format version {found} (this build reads version {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("truncated payload while reading {section}")]
    Truncated { section: &'static str },

    #[error("inconsistent file contents: {0}")]
    Inconsistent(String),
}

pub(crate) fn shape_err(expected: impl ToString, found: impl ToString) -> Error {
    Error::ShapeMismatch {
        expected: expected.to_string(),
        found: found.to_string(),
    }
}
