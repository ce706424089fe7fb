use std::path::PathBuf;

use thiserror::Error;

use crate::activations::ActivationKind;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Dimension {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("{name} = {value} is outside its valid range ({expected})")]
    ParamRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },

    #[error("activation `{kind}` cannot be used here: {reason}")]
    WrongKind {
        kind: ActivationKind,
        reason: &'static str,
    },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite gradient in parameter group `{group}` at index {index}")]
    NonFinite { group: String, index: usize },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("malformed file {path}: {reason} (at byte offset {offset})")]
    Format {
        path: PathBuf,
        offset: usize,
        reason: String,
    },

    #[error("parse error in {path} at row {row}, column {column}: {reason}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        reason: String,
    },

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
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(op: &'static str, lhs: &[usize], rhs: &[usize]) -> Self {
        Error::Dimension {
            op,
            lhs: lhs.to_vec(),
            rhs: rhs.to_vec(),
        }
    }
}
