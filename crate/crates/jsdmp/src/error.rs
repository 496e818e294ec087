//! Error type shared across the crate.

use thiserror::Error;

/// Everything that can go wrong, from shape mismatches to corrupt checkpoints.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("index out of range: {0}")]
    Index(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error at {file}:{line}: {msg}")]
    Parse {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training failure: {0}")]
    Train(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable short code, used as a greppable prefix in CLI error output.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::Index(_) => "index",
            Error::State(_) => "state",
            Error::Config(_) => "config",
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Checkpoint(_) => "checkpoint",
            Error::Train(_) => "train",
            Error::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
