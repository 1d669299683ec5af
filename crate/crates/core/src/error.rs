//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum S4nnError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("{path}: bad magic number: expected 0x{expected:08x}, got 0x{got:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },

    #[error("{path}: truncated or malformed at byte offset {offset}: {reason}")]
    Malformed {
        path: PathBuf,
        offset: usize,
        reason: String,
    },

    #[error("{path}: {reason}")]
    Dataset { path: PathBuf, reason: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged: {0}")]
    Divergence(String),

    #[error("i/o error{}: {source}", path_suffix(.path))]
    Io {
        #[source]
        source: std::io::Error,
        path: Option<PathBuf>,
    },
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" ({})", p.display()),
        None => String::new(),
    }
}

impl From<std::io::Error> for S4nnError {
    fn from(source: std::io::Error) -> Self {
        S4nnError::Io { source, path: None }
    }
}

impl S4nnError {
    pub fn io_at(source: std::io::Error, path: impl Into<PathBuf>) -> Self {
        S4nnError::Io {
            source,
            path: Some(path.into()),
        }
    }
}

pub type Result<T> = std::result::Result<T, S4nnError>;
