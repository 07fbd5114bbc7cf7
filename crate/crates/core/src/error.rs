use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid config: {0}")]
    Config(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{path}: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("episode already finished")]
    EpisodeDone,

    #[error("instance too large for exhaustive search: {0} plans")]
    TooLarge(u128),

    #[error("metric undefined: {0}")]
    Undefined(&'static str),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// True for errors caused by bad input data rather than configuration.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Parse { .. } | Error::Format { .. } | Error::Json(_) | Error::Csv(_) => true,
            Error::Context { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
