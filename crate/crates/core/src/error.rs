use std::path::PathBuf;

use thiserror::Error;

use crate::types::{LabelSpace, Polarity};

/// Data, configuration and aggregation errors.
///
/// Backend and pipeline failures have their own types in
/// [`backend::BackendError`](crate::backend::BackendError) and
/// [`strategy::ExecutionError`](crate::strategy::ExecutionError).
#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown label value {0:?}")]
    UnknownLabel(String),
    #[error("label {label} is not in the {space} label space")]
    LabelOutsideSpace { label: Polarity, space: LabelSpace },
    #[error("review text is empty")]
    EmptyText,
    #[error("domain name must be non-empty")]
    InvalidDomain,
    #[error("star rating {0} outside 1..=5")]
    StarsOutOfRange(i64),

    #[error("{path}: missing column {column:?}")]
    MissingColumn { path: PathBuf, column: String },
    #[error("{path}:{line}: {message}")]
    Row {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("dataset {0:?}: {1}")]
    DatasetSpec(String, String),
    #[error("requested subset of {requested} from only {available} samples")]
    SubsetTooLarge { requested: usize, available: usize },

    #[error("template error: {0}")]
    Template(String),
    #[error("step index {index} out of range for a {steps}-step plan")]
    StepOutOfRange { index: usize, steps: usize },

    #[error("no gold label for sample {0:?}")]
    MissingGold(String),
    #[error("duplicate reports for {0}")]
    DuplicateReports(String),

    #[error("config: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(context: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json {
            context: context.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
