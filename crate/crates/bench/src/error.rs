use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("invalid suite: {0}")]
    Suite(String),
    #[error("bad size {0:?}, expected NxM")]
    Size(String),
    #[error(transparent)]
    Core(#[from] tngeo::error::Error),
    #[error("no results under {0}")]
    NoResults(PathBuf),
}

pub type Result<T> = std::result::Result<T, BenchError>;

pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Io { path, source }
}

pub(crate) fn json(path: impl Into<PathBuf>) -> impl FnOnce(serde_json::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Json { path, source }
}

pub(crate) fn csv_err(path: impl Into<PathBuf>) -> impl FnOnce(csv::Error) -> BenchError {
    let path = path.into();
    move |source| BenchError::Csv { path, source }
}
