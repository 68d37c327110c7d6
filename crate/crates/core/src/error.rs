use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error at row {row}: {message}")]
    Csv { row: usize, message: String },

    #[error("row {row} has {found} cells, expected {expected}")]
    RaggedRow {
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("empty cell at row {row}, column {column} ({feature})")]
    EmptyCell {
        row: usize,
        column: usize,
        feature: String,
    },

    #[error("column {column} ({feature}) has no values")]
    EmptyColumn { column: usize, feature: String },

    #[error("duplicate feature name {name:?} at column {column}")]
    DuplicateFeature { name: String, column: usize },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("schema mismatch: {0}")]
    SchemaMismatch(String),

    #[error("unknown feature {0:?}")]
    UnknownFeature(String),

    #[error("unknown value {value:?} for feature {feature:?}")]
    UnknownValue { feature: String, value: String },

    #[error("malformed query at line {line}, column {column}: {message}")]
    MalformedQuery {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("{0} must not be empty")]
    Empty(&'static str),

    #[error("{count} value vectors appear with both labels (first conflicting positive: item {first_item})")]
    LabelConflict { count: usize, first_item: usize },

    #[error("leaf path is contradictory on feature {feature}")]
    InconsistentPath { feature: usize },

    #[error("no reliable negatives found; cannot fit a two-class tree")]
    NoNegatives,

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("{0}")]
    Generator(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
