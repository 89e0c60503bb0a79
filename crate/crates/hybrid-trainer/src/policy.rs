//! Reward, advantage and score-function loss for the policy path.

use diffmath::{row_cross_entropy, DiffError, Tape, Tensor, Var};
use rand::Rng;
use tasknet::TaskNet;

use crate::TrainError;

pub const ADV_EPS: f64 = 1e-8;
/// Below this reward spread a batch carries no usable signal.
pub const ZERO_VARIANCE: f64 = 1e-12;

/// `(r - mean) / (std + eps)` with population std; all zeros when the
/// spread is negligible.
pub fn standardize_advantages(rewards: &[f64]) -> Result<Vec<f64>, TrainError> {
    if rewards.len() < 2 {
        return Err(TrainError::Config("standardized advantages need at least 2 rewards".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    // Re-center: rounding in the first mean is large next to a tiny spread.
    let centered: Vec<f64> = rewards.iter().map(|r| r - mean).collect();
    let drift = centered.iter().sum::<f64>() / n;
    let centered: Vec<f64> = centered.iter().map(|c| c - drift).collect();
    let std = (centered.iter().map(|c| c * c).sum::<f64>() / n).sqrt();
    if std < ZERO_VARIANCE {
        return Ok(vec![0.0; rewards.len()]);
    }
    Ok(centered.iter().map(|c| c / (std + ADV_EPS)).collect())
}

/// Loss reduction from pairing `x_c` with `x_q` instead of the null
/// context, under the current (untracked) tasknet parameters.
pub fn compute_reward(task: &TaskNet, x_q: &[f64], x_c: &[f64], label: usize) -> Result<f64, DiffError> {
    let q = Tensor::row(x_q.to_vec());
    let null = task.logits_noctx(&q)?;
    let ctx = task.logits(&q, &Tensor::row(x_c.to_vec()))?;
    Ok(row_cross_entropy(null.data(), label)? - row_cross_entropy(ctx.data(), label)?)
}

/// Batched [`compute_reward`]: rows of `xq` paired with rows of `xc`.
pub fn compute_rewards(task: &TaskNet, xq: &Tensor, xc: &Tensor, labels: &[usize]) -> Result<Vec<f64>, DiffError> {
    let null = task.logits_noctx(xq)?;
    let ctx = task.logits(xq, xc)?;
    labels
        .iter()
        .enumerate()
        .map(|(r, &y)| Ok(row_cross_entropy(null.row_slice(r), y)? - row_cross_entropy(ctx.row_slice(r), y)?))
        .collect()
}

/// `-(1/B) sum_b log pi(a_b | o_b) A_b`, with log-probabilities taken from
/// the row-wise log-softmax of `scores`. Advantages enter as constants.
pub fn policy_loss(tape: &mut Tape, scores: Var, actions: &[usize], advantages: &[f64]) -> Result<Var, TrainError> {
    let (b, n) = tape.value(scores).shape();
    if actions.len() != b || advantages.len() != b || b == 0 {
        return Err(TrainError::InvalidArgument(format!("{b} row(s), {} action(s), {} advantage(s)", actions.len(), advantages.len())));
    }
    for (r, &a) in actions.iter().enumerate() {
        if a >= n || tape.value(scores).get(r, a) == f64::NEG_INFINITY {
            return Err(TrainError::InvalidArgument(format!("action {a} in row {r} is masked or out of range")));
        }
    }
    let logp = tape.log_softmax(scores)?;
    let w: Vec<f64> = advantages.iter().map(|a| -a / b as f64).collect();
    Ok(tape.pick(logp, actions, &w)?)
}

/// Inverse-CDF draw from a probability vector; zero-probability entries
/// are never returned.
pub fn sample_index<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in probs.iter().enumerate() {
        if p > 0.0 {
            acc += p;
            last = i;
            if u < acc {
                return i;
            }
        }
    }
    last
}
