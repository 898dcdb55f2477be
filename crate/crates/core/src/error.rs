use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("gap in house {house}: missing minute {timestamp}")]
    Gap { house: u32, timestamp: i64 },

    /// One entry per violated rule, so callers can report all of them at once.
    #[error("config error: {}", .0.join("; "))]
    Config(Vec<String>),

    #[error("shape error: expected {expected}, got {actual}")]
    Shape { expected: usize, actual: usize },

    #[error("numeric error at sample {index}: {message}")]
    Numeric { index: usize, message: String },

    #[error("training diverged at epoch {epoch}: {message}")]
    Diverged { epoch: usize, message: String },

    #[error("empty aggregation window for house {house}: {window}")]
    EmptyWindow { house: u32, window: String },

    #[error("house {house} has no score for appliance `{appliance}`")]
    MissingScore { house: u32, appliance: String },

    #[error("access denied: {0}")]
    Leakage(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub fn config(message: impl Into<String>) -> Self {
        Error::Config(vec![message.into()])
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
