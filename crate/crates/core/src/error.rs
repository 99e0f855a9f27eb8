use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents. `field` names the offending header field or payload region.
    #[error("format error in {field}: {message}")]
    Format { field: String, message: String },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("ground plane fit failed: {0}")]
    FitFailed(String),

    #[error("projection undefined for row {v} (at or above horizon {v_horizon})")]
    ProjectionUndefined { v: f64, v_horizon: f64 },

    #[error("cannot balance patch classes: {0}")]
    BalanceImpossible(String),

    #[error("sequence {0} is unusable: no frame yielded a ground plane")]
    UnusableSequence(String),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            field: field.into(),
            message: message.into(),
        }
    }

    pub(crate) fn arg(message: impl Into<String>) -> Self {
        Error::Argument(message.into())
    }
}
