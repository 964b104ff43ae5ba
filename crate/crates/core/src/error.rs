use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library. Every variant is an operational failure
/// (bad input data, infeasible configuration); usage errors live in the CLI.
#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("duplicate procedure id `{0}`")]
    DuplicateId(String),

    #[error("embedding file row {row}: {message}")]
    EmbeddingFormat { row: usize, message: String },

    #[error("duplicate token `{0}` in embedding file")]
    DuplicateToken(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("degenerate training data: {0}")]
    Degenerate(String),

    #[error("title pool too small: need {needed} titles, pool has {available}")]
    PoolTooSmall { needed: usize, available: usize },

    #[error("insufficient eligible distractors for `{qid}`: need {needed}, found {found}")]
    InsufficientDistractors { qid: String, needed: usize, found: usize },

    #[error("duplicate choice `{0}`")]
    DuplicateChoice(String),

    #[error("report mismatch: {0}")]
    ReportMismatch(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
