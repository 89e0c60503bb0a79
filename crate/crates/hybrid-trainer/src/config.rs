//! Training and model hyperparameters.

use serde::{Deserialize, Serialize};

use crate::TrainError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    Standardized,
    Raw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ablation {
    Full,
    SoftOnly,
    PolicyOnly,
}

impl std::str::FromStr for AdvantageMode {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "standardized" => Ok(AdvantageMode::Standardized),
            "raw" => Ok(AdvantageMode::Raw),
            o => Err(TrainError::Config(format!("unknown advantage mode `{o}`"))),
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = TrainError;
    fn from_str(s: &str) -> Result<Self, TrainError> {
        match s {
            "full" => Ok(Ablation::Full),
            "soft_only" => Ok(Ablation::SoftOnly),
            "policy_only" => Ok(Ablation::PolicyOnly),
            o => Err(TrainError::Config(format!("unknown ablation `{o}`"))),
        }
    }
}

impl std::fmt::Display for AdvantageMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            AdvantageMode::Standardized => "standardized",
            AdvantageMode::Raw => "raw",
        })
    }
}

impl std::fmt::Display for Ablation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Ablation::Full => "full",
            Ablation::SoftOnly => "soft_only",
            Ablation::PolicyOnly => "policy_only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridConfig {
    pub tau: f64,
    pub lambda: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    pub advantage: AdvantageMode,
    pub ablation: Ablation,
}

impl Default for HybridConfig {
    fn default() -> Self {
        HybridConfig {
            tau: 0.1,
            lambda: 0.5,
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 17,
            advantage: AdvantageMode::Standardized,
            ablation: Ablation::Full,
        }
    }
}

impl HybridConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad("momentum must lie in [0, 1)");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.advantage == AdvantageMode::Standardized && self.batch_size < 2 {
            return bad("standardized advantages need batch_size >= 2 (use advantage = raw)");
        }
        Ok(())
    }
}

/// Network widths.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub selector_hidden: usize,
    pub embed_dim: usize,
    pub task_hidden: usize,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig { selector_hidden: 64, embed_dim: 256, task_hidden: 64 }
    }
}
