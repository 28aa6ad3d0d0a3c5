use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    Dimension {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("row {row}: expected {expected} columns, found {found}")]
    RaggedRow {
        row: usize,
        expected: usize,
        found: usize,
    },

    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("row {row}, column {col}: value {value} outside [0, 1]")]
    Domain { row: usize, col: usize, value: f64 },

    #[error("invalid split: {train} + {valid} exceeds {available} examples")]
    InvalidSplit {
        train: usize,
        valid: usize,
        available: usize,
    },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("class count mismatch: {0} vs {1}")]
    ClassMismatch(usize, usize),

    #[error("classes {0} and {1} have identical weight vectors")]
    DegeneratePair(usize, usize),

    #[error("every class pair is degenerate; importances cannot be scored")]
    CannotScore,

    #[error("no variable has importance >= {threshold}; the mask would be empty")]
    EmptyMask { threshold: f64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
