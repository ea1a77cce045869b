use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input failed a domain invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("model `{model}` is missing predictions for instances {ids:?}")]
    MissingInstances { model: String, ids: Vec<String> },

    #[error("model `{model}` has predictions for unknown instances {ids:?}")]
    ExtraInstances { model: String, ids: Vec<String> },

    #[error("non-binary label {value} for instance `{instance}`")]
    NonBinaryLabel { instance: String, value: i64 },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    /// An estimate or integral could not be computed to a finite value.
    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag for the error family.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid(_) => "invalid_input",
            Error::MissingInstances { .. } => "missing_instances",
            Error::ExtraInstances { .. } => "extra_instances",
            Error::NonBinaryLabel { .. } => "non_binary_label",
            Error::Parse { .. } => "parse",
            Error::Numerical(_) => "numerical",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }

    /// Process exit code: 2 for numerical failures, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Numerical(_) => 2,
            _ => 1,
        }
    }
}
