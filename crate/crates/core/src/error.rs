use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: line {line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}: line {line}: duplicate clip_id {clip_id:?}", path.display())]
    DuplicateClip {
        path: PathBuf,
        line: usize,
        clip_id: String,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("backend {backend} failed for clip {clip_id} after {attempts} attempt(s): {message}")]
    Backend {
        backend: String,
        clip_id: String,
        attempts: u32,
        message: String,
    },

    #[error("cache conflict for key {key}: existing entry holds different content")]
    CacheConflict { key: String },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("token id {id} out of vocabulary (size {vocab_size})")]
    TokenOutOfVocabulary { id: u32, vocab_size: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
