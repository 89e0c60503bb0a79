//! Joint training of the selector and tasknet through a straight-through
//! Gumbel-softmax path and a score-function policy path.

mod config;
mod error;
pub mod eval;
pub mod gumbel;
mod optim;
pub mod policy;
mod report;
mod step;
mod train;

pub use config::{Ablation, AdvantageMode, HybridConfig, ModelConfig};
pub use error::TrainError;
pub use optim::Momentum;
pub use report::{AbortInfo, EpochRecord, TrainReport};
pub use step::{pool_tensor, train_step, Batch, LossRecord, Models, SelectionOutcome, StepResult, StepRngs};
pub use train::{epoch_batches, train};
