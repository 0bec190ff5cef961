use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid size {0} must be a power of two and at least 8")]
    InvalidGrid(usize),
    #[error("invalid metric: {0}")]
    InvalidMetric(String),
    #[error("field shape mismatch: expected {expected} nodes, got {got}")]
    Shape { expected: usize, got: usize },
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("{what} is not unit-norm (max deviation {deviation:.3e})")]
    NonUnit { what: &'static str, deviation: f64 },
    #[error("gauge solve failed: {0}")]
    Gauge(String),
    #[error("numerical abort at t = {t}: {reason}")]
    Abort { t: f64, reason: String },
    #[error("configuration rejected:\n  {}", .0.join("\n  "))]
    Config(Vec<String>),
    #[error("snapshot {path}: {reason}")]
    Snapshot { path: PathBuf, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
