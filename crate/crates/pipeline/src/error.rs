use std::path::Path;

use thiserror::Error;

use crate::client::ClientError;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Format(#[from] spatialvqa::formats::FormatError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("{path} line {line}: {detail}")]
    Parse { path: String, line: usize, detail: String },
    #[error("manifest {path} has {count} violation(s), first: {first}")]
    InvalidManifest { path: String, count: usize, first: String },
    #[error("{0}")]
    Other(String),
}

impl PipelineError {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        PipelineError::Io { path: path.as_ref().display().to_string(), source }
    }
}
