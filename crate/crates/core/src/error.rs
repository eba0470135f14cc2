use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("every document is empty after preprocessing")]
    AllDocumentsEmpty,

    #[error("term-document matrix needs at least {required} documents, got {got}")]
    TooFewDocuments { required: usize, got: usize },

    #[error("k = {k} exceeds min(n, w) = {max}")]
    KTooLarge { k: usize, max: usize },

    #[error("k must be at least 1")]
    KZero,

    #[error("truncated SVD did not converge after {iterations} iterations (residual {residual:e})")]
    ConvergenceFailure { iterations: usize, residual: f64 },

    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("query row {0} must not appear in its own comparison set")]
    SelfComparison(usize),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("embedding has zero norm (row {row})")]
    ZeroNormEmbedding { row: usize },

    #[error("token sequence {row} is empty")]
    EmptySequence { row: usize },

    #[error("gradient contains a non-finite value")]
    NonFiniteGradient,

    #[error("semantic rows are not aligned with the dataset: {0}")]
    SemanticRowMisalignment(String),

    #[error("mini-batch is empty or has fewer than 2 pairs")]
    EmptyBatch,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("division by zero: {0}")]
    DivisionByZero(&'static str),

    #[error("the reference run was never validated")]
    BeforeFirstValidation,

    #[error("description {description} references unknown image {image}")]
    MissingImageId { description: String, image: String },

    #[error("duplicate description id {0}")]
    DuplicateDescriptionId(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("bad file format in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::ShapeMismatch(msg.into())
    }
}
