use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("no data rows")]
    NoDataRows,

    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column '{column}': unknown label '{value}'")]
    BadLabel {
        row: usize,
        column: String,
        value: String,
    },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("duplicate case id '{0}'")]
    DuplicateId(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("labels required but dataset is unlabeled")]
    MissingLabels,

    #[error("both classes must be present (found only {0})")]
    SingleClass(&'static str),

    #[error("dimension mismatch: model expects {expected} features, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite feature value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("filter configuration removes every reject")]
    FilterRemovesAll,

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
