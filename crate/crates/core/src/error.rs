use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("row {row}: missing required role `{role}`")]
    MissingRole { row: usize, role: String },

    #[error("row {row}: language role `{role}` is not declared by the task schema")]
    UnexpectedRole { row: usize, role: String },

    #[error("unknown language role column `{0}`")]
    UnknownRoleColumn(String),

    #[error("row {row}: cannot parse `{value}` in column `{column}` as a number")]
    NotNumeric {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}: score {score} is out of range for metric {metric}")]
    ScoreOutOfRange {
        row: usize,
        score: f64,
        metric: String,
    },

    #[error("duplicate record key: {0}")]
    DuplicateRecord(String),

    #[error("record task `{record}` does not match schema task `{schema}`")]
    SchemaMismatch { record: String, schema: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("k = {k} is out of range for {units} partition units")]
    FoldCountOutOfRange { k: usize, units: usize },

    #[error("distance table row {row}: {message}")]
    InvalidDistance { row: usize, message: String },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("empty vocabulary")]
    EmptyVocabulary,

    #[error("reference type-token ratio must be positive, got {0}")]
    ZeroTtr(f64),

    #[error("line {line}: token has no tags")]
    UntaggedToken { line: usize },

    #[error("treebank line {line}: {message}")]
    MalformedTreebank { line: usize, message: String },

    #[error("invalid booster parameters: {0}")]
    InvalidParams(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("training set is empty")]
    EmptyTrainingSet,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("unknown feature `{0}`")]
    UnknownFeature(String),

    #[error("predictor `{kind}` is not applicable to task `{task}`: {reason}")]
    InvalidKind {
        kind: String,
        task: String,
        reason: String,
    },

    #[error("subset search: {0}")]
    InvalidSubset(String),

    #[error("extrapolation: {0}")]
    Extrapolation(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
