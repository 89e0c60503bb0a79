use thiserror::Error;

#[derive(Debug, Error)]
pub enum BaselineError {
    #[error("no unmasked candidate for group {0}")]
    EmptyPool(u64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unknown method `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Diff(#[from] diffmath::DiffError),
    #[error(transparent)]
    Selector(#[from] selector::SelectorError),
    #[error(transparent)]
    Train(#[from] hybrid_trainer::TrainError),
    #[error(transparent)]
    Bench(#[from] synthbench::BenchError),
}
