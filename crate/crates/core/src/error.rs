use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty collection")]
    EmptyCollection,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("degenerate training set: {0}")]
    DegenerateTrainingSet(String),

    #[error("no score for document {0}")]
    MissingScore(String),

    #[error("feature space mismatch: {0}")]
    FeatureMismatch(String),

    #[error("invalid value for document {doc_id}: {reason}")]
    InvalidRecord { doc_id: String, reason: String },

    #[error("duplicate score for document {0}")]
    DuplicateScore(String),

    #[error("unknown {kind} `{name}`")]
    UnknownName { kind: &'static str, name: String },

    #[error("invalid span {start}..{end} for text of length {len}")]
    InvalidSpan { start: usize, end: usize, len: usize },

    #[error("annotation for document {found} passed while aggregating {expected}")]
    ForeignAnnotation { expected: String, found: String },

    #[error("relative coverage undefined: no hateful posts contain lexicon terms")]
    RelativeCoverageUndefined,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("oracle failed on document {doc_id}: {reason}")]
    OracleFailed { doc_id: String, reason: String },

    #[error("{path}:{line}: {source}")]
    Parse {
        path: PathBuf,
        line: usize,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
