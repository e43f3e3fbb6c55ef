//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration value; `key` names the offending field.
    #[error("config error at `{key}`: {msg}")]
    Config { key: String, msg: String },

    /// Request exceeds a hard size cap of the dense oracle.
    #[error("size cap exceeded: {0}")]
    SizeCap(String),

    /// Operation called in an unsupported run mode.
    #[error("unsupported mode: {0}")]
    Mode(String),

    /// Not enough data to form an estimate.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Every path of an interval was abandoned; no estimate possible.
    #[error("all paths abandoned in interval {interval}")]
    AllPathsAbandoned { interval: usize },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("checkpoint format error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn config(key: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
