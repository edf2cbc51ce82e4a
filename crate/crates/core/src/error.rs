use std::path::PathBuf;

use thiserror::Error;

use crate::diffcore::DiffError;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("non-finite loss at step {step} (slice {slice}, mask {mask})")]
    NonFiniteLoss { step: u64, slice: usize, mask: usize },
    #[error("non-finite gradient at step {step} (slice {slice}, mask {mask})")]
    NonFiniteGradient { step: u64, slice: usize, mask: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: corrupt file ({detail})")]
    Corrupt { path: PathBuf, detail: String },
    #[error("{path}: format version {found}, expected {expected}")]
    Version { path: PathBuf, found: u32, expected: u32 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub(crate) fn corrupt(path: impl Into<PathBuf>, detail: impl Into<String>) -> Self {
        Error::Corrupt { path: path.into(), detail: detail.into() }
    }
}
