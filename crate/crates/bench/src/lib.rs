//! Experiment harness: runs algorithms over seeded objective instances and
//! aggregates the trajectories into summary rows and convergence curves.

pub mod curves;
pub mod experiment;
pub mod summary;

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    /// Bad names or flag values; the CLI exits with status 2.
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] gnn_es::Error),

    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },

    #[error("config {path}: {source}")]
    Config { path: PathBuf, source: toml::de::Error },
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}
