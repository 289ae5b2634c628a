use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or model shapes do not line up.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Caller supplied an argument outside the operation's domain.
    #[error("invalid input: {0}")]
    Input(String),

    /// A configuration file failed validation; `field` is the dotted path.
    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    /// Malformed binary file; `offset` is the byte where parsing stopped.
    #[error("format error in {path} at byte {offset}: {message}")]
    Format { path: String, offset: u64, message: String },

    /// Operation called with inconsistent internal state (e.g. a stale cache).
    #[error("state error: {0}")]
    State(String),

    /// NaN or infinity produced by a computation.
    #[error("numeric failure: {0}")]
    Numeric(String),

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
    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line driver.
    ///
    /// 2 covers configuration, input and I/O problems, 3 shape or
    /// architecture incompatibility, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Dimension(_) => 3,
            Error::Numeric(_) => 4,
            Error::State(_) => 1,
            Error::Input(_)
            | Error::Config { .. }
            | Error::Format { .. }
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_) => 2,
        }
    }
}
