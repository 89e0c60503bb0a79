//! Training errors.

use diffmath::DiffError;
use selector::SelectorError;
use synthbench::BenchError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("config error: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("numeric abort in epoch {epoch}, batch {batch}: {message}")]
    Numeric { epoch: usize, batch: usize, message: String },
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Selector(#[from] SelectorError),
    #[error(transparent)]
    Bench(#[from] BenchError),
}
