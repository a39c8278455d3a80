use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by loading, training and the command line.
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("run diverged at epoch {epoch}, batch {batch}: {reason}")]
    Diverged {
        epoch: usize,
        batch: usize,
        reason: String,
    },
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("format error in {}: {message}", path.display())]
    Format { path: PathBuf, message: String },
    #[error("oracle check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] perturbnet_core::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::CheckFailed(_) | Error::Core(_) => 1,
            Error::Diverged { .. } => 2,
            Error::Io { .. } | Error::Format { .. } => 3,
        }
    }
}
