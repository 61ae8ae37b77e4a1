use std::path::PathBuf;

use thiserror::Error;

/// Errors raised while assembling inputs, models and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid value for `{field}`: {reason}")]
    Validation { field: String, reason: String },

    #[error("sequence needs {required} periods but the horizon has {horizon}")]
    HorizonOverflow { required: u32, horizon: u32 },

    #[error("unknown bale class {0}")]
    UnknownClass(String),

    #[error("sequence totals differ from inventory: {0}")]
    InventoryMismatch(String),

    #[error("parse error in {source_name} line {line}: {reason}")]
    Parse {
        source_name: String,
        line: usize,
        reason: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("sequencing rule cannot proceed: {0}")]
    Sequencing(String),

    #[error("model is infeasible: {0}")]
    Infeasible(String),

    #[error("solver failure: {0}")]
    Solver(String),

    #[error("configuration error: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn validation(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Validation {
            field: field.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn parse(source_name: impl Into<String>, line: usize, reason: impl Into<String>) -> Self {
        Error::Parse {
            source_name: source_name.into(),
            line,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
