//! Seeded candidate-pool split.

use rand::seq::index::sample;
use rand_chacha::ChaCha8Rng;

use crate::{BenchError, CandidatePool, Dataset};

/// Moves a seeded `fraction` of `train` into a fixed pool. Both parts keep
/// the original sample order.
pub fn build_pool(train: &Dataset, fraction: f64, rng: &mut ChaCha8Rng) -> Result<(CandidatePool, Dataset), BenchError> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(BenchError::Config(format!("pool fraction {fraction} outside (0, 1)")));
    }
    let n = train.len();
    let k = (fraction * n as f64).round() as usize;
    if k == 0 {
        return Err(BenchError::Config(format!("fraction {fraction} of {n} samples gives an empty pool")));
    }
    if k == n {
        return Err(BenchError::Config(format!("fraction {fraction} of {n} samples leaves no training queries")));
    }
    let mut chosen = vec![false; n];
    for i in sample(rng, n, k) {
        chosen[i] = true;
    }
    let mut pool = Vec::with_capacity(k);
    let mut rest = Vec::with_capacity(n - k);
    for (s, &c) in train.samples.iter().zip(&chosen) {
        if c {
            pool.push(s.clone());
        } else {
            rest.push(s.clone());
        }
    }
    let pool = CandidatePool::new(pool, train.d_in, fraction)?;
    Ok((pool, Dataset { d_in: train.d_in, classes: train.classes, samples: rest }))
}
