//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("missing value at row {row}, column '{column}'")]
    MissingValue { row: usize, column: String },

    #[error("cannot parse '{value}' at row {row}, column '{column}' as a finite number")]
    BadNumber {
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown level '{level}' at row {row}, column '{column}'")]
    UnknownLevel {
        row: usize,
        column: String,
        level: String,
    },

    #[error("unknown treatment '{treatment}' at row {row}")]
    UnknownTreatment { row: usize, treatment: String },

    #[error("treatment column '{0}' has fewer than 2 distinct values")]
    TooFewTreatments(String),

    #[error("treatment '{0}' has no observations")]
    EmptyTreatmentArm(String),

    #[error("dataset has no rows")]
    EmptyDataset,

    #[error("schema error: {0}")]
    Schema(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("data does not match the model schema: {0}")]
    SchemaMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("invalid model document: {0}")]
    BadModel(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
