use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid model spec: {0}")]
    InvalidSpec(String),

    #[error("invalid training config: {0}")]
    InvalidConfig(String),

    #[error("no training data")]
    EmptyData,

    #[error("non-finite loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("corrupt weight manifest {path}: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("tensor `{name}`: {reason}")]
    Tensor { name: String, reason: String },

    #[error("weight blob has {found} bytes, manifest needs {expected}")]
    BlobSize { expected: usize, found: usize },
}

pub type Result<T, E = NnError> = std::result::Result<T, E>;
