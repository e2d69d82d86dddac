use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A corpus or config line could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },

    /// Input was well-formed but violates a contract (unknown label, bad config, ...).
    #[error("validation error: {0}")]
    Validation(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): loss = {loss}")]
    Diverged {
        epoch: usize,
        learning_rate: f64,
        loss: f64,
    },

    #[error(
        "non-finite gradient at integration step {step} for document {doc_id}, class {class_index}"
    )]
    NonFiniteGradient {
        doc_id: String,
        class_index: usize,
        step: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by bad input rather than a failure while running.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. } | Error::Validation(_) | Error::Shape(_)
        )
    }
}
