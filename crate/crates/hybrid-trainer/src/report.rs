//! Per-epoch records and the training report.

use serde::{Deserialize, Serialize};
use synthbench::Metrics;

use crate::{HybridConfig, LossRecord};

/// Epoch 0 is the evaluation before any update.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean over the epoch's batches; zero for epoch 0.
    pub losses: LossRecord,
    pub eval: Metrics,
    /// Argmax agreement on the training split, where a selector exists.
    pub train_oracle_agreement: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub epoch: usize,
    pub batch: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub method: String,
    pub config: HybridConfig,
    pub pool_version: String,
    pub epochs: Vec<EpochRecord>,
    pub abort: Option<AbortInfo>,
}

impl TrainReport {
    pub fn last(&self) -> &EpochRecord {
        self.epochs.last().expect("report holds the initial evaluation")
    }

    pub fn initial(&self) -> &EpochRecord {
        &self.epochs[0]
    }
}
