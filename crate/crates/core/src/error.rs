use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("unknown polarity label `{0}`")]
    UnknownLabel(String),

    #[error("review `{0}` has empty text")]
    EmptyText(String),

    #[error("invalid aspect set: {0}")]
    InvalidAspects(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("non-finite value in record `{0}`")]
    NonFinite(String),

    #[error("degenerate embedding: zero vector")]
    DegenerateEmbedding,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("id `{0}` not found")]
    MissingId(String),

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("pair `{pair_id}` is missing {what}")]
    MissingField { pair_id: String, what: &'static str },

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("undefined input: {0}")]
    EmptyInput(&'static str),

    #[error("pair id sets differ: {0}")]
    PairMismatch(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
