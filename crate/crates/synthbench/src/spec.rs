//! Benchmark parameters.

use serde::{Deserialize, Serialize};

use crate::BenchError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BenchmarkKind {
    Keymatch,
    Crossclass,
}

impl std::str::FromStr for BenchmarkKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "keymatch" => Ok(BenchmarkKind::Keymatch),
            "crossclass" => Ok(BenchmarkKind::Crossclass),
            other => Err(BenchError::Config(format!("unknown benchmark `{other}`"))),
        }
    }
}

impl std::fmt::Display for BenchmarkKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            BenchmarkKind::Keymatch => "keymatch",
            BenchmarkKind::Crossclass => "crossclass",
        })
    }
}

/// Sizes and scales for a generated benchmark.
///
/// Every key holder owns `train_key_dims + eval_key_dims` one-hot
/// coordinates. Training queries address their holder through the first
/// group, evaluation queries through the second, so the query-side key of
/// an evaluation query has never been seen by any network during training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSpec {
    pub kind: BenchmarkKind,
    pub classes: usize,
    /// Number of key holders (prototypes for crossclass).
    pub keys: usize,
    pub train_key_dims: usize,
    pub eval_key_dims: usize,
    /// Keymatch only: shared distractor candidates, the last
    /// `eval_distractors` of which serve evaluation queries.
    pub distractors: usize,
    pub eval_distractors: usize,
    pub payload_dims: usize,
    pub key_scale: f64,
    pub payload_scale: f64,
    /// Multiplies the payload scale; 0 removes the similarity trap.
    pub distractor_strength: f64,
    /// Keymatch only: chance that a training query's distractor carries
    /// its holder's code.
    pub helpful_distractor_rate: f64,
    /// Crossclass only: share of base samples moved into the pool.
    pub pool_fraction: f64,
    pub train_size: usize,
    pub eval_size: usize,
    pub seed: u64,
}

impl BenchmarkSpec {
    pub fn keymatch(seed: u64) -> Self {
        BenchmarkSpec {
            kind: BenchmarkKind::Keymatch,
            classes: 4,
            keys: 32,
            train_key_dims: 3,
            eval_key_dims: 1,
            distractors: 32,
            eval_distractors: 8,
            payload_dims: 16,
            key_scale: 2.0,
            payload_scale: 3.0,
            distractor_strength: 1.0,
            helpful_distractor_rate: 0.0,
            pool_fraction: 0.2,
            train_size: 1024,
            eval_size: 512,
            seed,
        }
    }

    pub fn crossclass(seed: u64) -> Self {
        BenchmarkSpec {
            kind: BenchmarkKind::Crossclass,
            keys: 16,
            distractors: 0,
            eval_distractors: 0,
            ..Self::keymatch(seed)
        }
    }

    pub fn default_for(kind: BenchmarkKind, seed: u64) -> Self {
        match kind {
            BenchmarkKind::Keymatch => Self::keymatch(seed),
            BenchmarkKind::Crossclass => Self::crossclass(seed),
        }
    }

    pub fn key_dims(&self) -> usize {
        self.train_key_dims + self.eval_key_dims
    }

    /// Feature layout: key block, query code block, candidate code block,
    /// payload block.
    pub fn d_in(&self) -> usize {
        self.keys * self.key_dims() + 2 * self.classes + self.payload_dims
    }

    pub(crate) fn query_code_offset(&self) -> usize {
        self.keys * self.key_dims()
    }

    pub(crate) fn cand_code_offset(&self) -> usize {
        self.query_code_offset() + self.classes
    }

    pub(crate) fn payload_offset(&self) -> usize {
        self.cand_code_offset() + self.classes
    }

    pub fn validate(&self) -> Result<(), BenchError> {
        let bad = |m: &str| Err(BenchError::Config(m.to_string()));
        if self.classes < 2 {
            return bad("classes must be at least 2");
        }
        if self.keys == 0 || self.train_key_dims == 0 || self.eval_key_dims == 0 {
            return bad("keys, train_key_dims and eval_key_dims must be positive");
        }
        if self.train_size == 0 || self.eval_size == 0 {
            return bad("train_size and eval_size must be positive");
        }
        if self.payload_dims == 0 {
            return bad("payload_dims must be positive");
        }
        if !(self.key_scale > 0.0 && self.payload_scale >= 0.0 && self.distractor_strength >= 0.0) {
            return bad("scales must be non-negative and key_scale positive");
        }
        if !(0.0..=1.0).contains(&self.helpful_distractor_rate) {
            return bad("helpful_distractor_rate must lie in [0, 1]");
        }
        match self.kind {
            BenchmarkKind::Keymatch => {
                if self.eval_distractors == 0 || self.eval_distractors >= self.distractors {
                    return bad("need 0 < eval_distractors < distractors");
                }
            }
            BenchmarkKind::Crossclass => {
                if !(self.pool_fraction > 0.0 && self.pool_fraction < 1.0) {
                    return bad("pool_fraction must lie in (0, 1)");
                }
            }
        }
        Ok(())
    }
}
