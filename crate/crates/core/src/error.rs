use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileNotFound(PathBuf),

    #[error("cannot decode image {path}: {message}")]
    Decode { path: String, message: String },

    #[error("no images found under {}", .0.display())]
    EmptyDataset(PathBuf),

    #[error("manifest {}: {message}", path.display())]
    ManifestParse { path: PathBuf, message: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("index format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("index is empty")]
    EmptyIndex,

    #[error("neighbor list is empty")]
    EmptyNeighborList,

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("failed to extract {} image(s): {}", .0.len(), summarize_failures(.0))]
    Extraction(Vec<(PathBuf, String)>),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

fn summarize_failures(failures: &[(PathBuf, String)]) -> String {
    failures
        .iter()
        .map(|(path, msg)| format!("{} ({msg})", path.display()))
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T> = std::result::Result<T, Error>;
