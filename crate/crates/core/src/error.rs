use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    /// Input file does not match its documented layout.
    #[error("schema mismatch: {0}")]
    Schema(String),

    /// Input parses but violates a data invariant.
    #[error("invalid data: {0}")]
    Data(String),

    /// Caller-supplied parameter outside its domain.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("common support violated: {0}")]
    Support(String),

    #[error("tree {index}: {source}")]
    Tree {
        index: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 numerical or support abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidArgument(_) => 1,
            Error::Io { .. } | Error::Csv(_) | Error::Json(_) | Error::Schema(_) | Error::Data(_) => 2,
            Error::Numerical(_) | Error::Support(_) => 3,
            Error::Tree { source, .. } => source.exit_code(),
        }
    }
}

macro_rules! invalid_arg {
    ($($arg:tt)*) => { $crate::error::Error::InvalidArgument(format!($($arg)*)) };
}
pub(crate) use invalid_arg;
