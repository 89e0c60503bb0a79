//! Samples, datasets, candidate pools.

use sha2::{Digest, Sha256};

use crate::{BenchError, BenchmarkSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSample {
    pub features: Vec<f64>,
    pub label: usize,
    /// Leakage unit: candidates sharing a query's group are masked.
    pub group: u64,
    /// Latent key (holder index). Never shown to the networks.
    pub key: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub d_in: usize,
    pub classes: usize,
    pub samples: Vec<LabeledSample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn labels(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.label).collect()
    }
}

/// Immutable, indexed candidate set.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePool {
    candidates: Vec<LabeledSample>,
    d_in: usize,
    matrix: Vec<f64>,
    version: String,
    fraction: f64,
}

impl CandidatePool {
    pub fn new(candidates: Vec<LabeledSample>, d_in: usize, fraction: f64) -> Result<Self, BenchError> {
        if candidates.is_empty() {
            return Err(BenchError::Config("candidate pool is empty".into()));
        }
        if let Some(c) = candidates.iter().find(|c| c.features.len() != d_in) {
            return Err(BenchError::InvalidArgument(format!(
                "candidate of dimension {} in a pool of dimension {d_in}",
                c.features.len()
            )));
        }
        let matrix = candidates.iter().flat_map(|c| c.features.iter().copied()).collect();
        let version = content_hash(d_in, &candidates);
        Ok(CandidatePool { candidates, d_in, matrix, version, fraction })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn get(&self, i: usize) -> &LabeledSample {
        &self.candidates[i]
    }

    pub fn candidates(&self) -> &[LabeledSample] {
        &self.candidates
    }

    /// Row-major `len x d_in` feature matrix.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Hex SHA-256 of the pool contents.
    pub fn version(&self) -> &str {
        &self.version
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    /// True where the candidate shares the query's group and must be masked.
    pub fn leakage_mask(&self, query_group: u64) -> Vec<bool> {
        self.candidates.iter().map(|c| c.group == query_group).collect()
    }
}

pub(crate) fn content_hash(d_in: usize, samples: &[LabeledSample]) -> String {
    let mut h = Sha256::new();
    h.update((d_in as u64).to_le_bytes());
    for s in samples {
        for v in &s.features {
            h.update(v.to_le_bytes());
        }
        h.update((s.label as u64).to_le_bytes());
        h.update(s.group.to_le_bytes());
        h.update(s.key.map_or(-1i64, |k| k as i64).to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// A generated benchmark: splits, pool and the helpful-candidate oracle.
#[derive(Debug, Clone)]
pub struct Benchmark {
    pub spec: BenchmarkSpec,
    pub train: Dataset,
    pub eval: Dataset,
    pub pool: CandidatePool,
    /// Pool index of the most helpful candidate for each training query.
    pub train_oracle: Vec<usize>,
    pub eval_oracle: Vec<usize>,
    /// Pool index of the planted similarity trap per query, if it has one.
    pub train_traps: Vec<Option<usize>>,
    pub eval_traps: Vec<Option<usize>>,
}

impl Benchmark {
    /// Hash over pool and both splits.
    pub fn snapshot_hash(&self) -> String {
        let mut all = self.pool.candidates().to_vec();
        all.extend(self.train.samples.iter().cloned());
        all.extend(self.eval.samples.iter().cloned());
        content_hash(self.pool.d_in(), &all)
    }
}
