//! Evaluation metrics over per-query outcomes.

use serde::{Deserialize, Serialize};

use crate::{BenchError, CandidatePool, Dataset};

/// What one evaluation query produced.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryOutcome {
    pub prediction: usize,
    /// Argmax pool index; `None` for methods that use no retrieval.
    pub selected: Option<usize>,
    /// Entropy of the selection distribution, where one exists.
    pub entropy: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub oracle_agreement: Option<f64>,
    pub cross_class_rate: Option<f64>,
    pub mean_entropy: Option<f64>,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

pub fn eval_metrics(outcomes: &[QueryOutcome], eval: &Dataset, oracle: &[usize], pool: &CandidatePool) -> Result<Metrics, BenchError> {
    if outcomes.len() != eval.len() || oracle.len() != eval.len() {
        return Err(BenchError::InvalidArgument(format!(
            "{} outcome(s) and {} oracle entries for {} evaluation queries",
            outcomes.len(),
            oracle.len(),
            eval.len()
        )));
    }
    if eval.is_empty() {
        return Err(BenchError::InvalidArgument("empty evaluation set".into()));
    }
    let hit = |b: bool| if b { 1.0 } else { 0.0 };
    let accuracy = mean(outcomes.iter().zip(&eval.samples).map(|(o, s)| hit(o.prediction == s.label)));
    let selected: Option<Vec<usize>> = outcomes.iter().map(|o| o.selected).collect();
    let (oracle_agreement, cross_class_rate) = match selected {
        Some(sel) => {
            if let Some(&bad) = sel.iter().find(|&&i| i >= pool.len()) {
                return Err(BenchError::InvalidArgument(format!("selection {bad} outside the pool")));
            }
            let agree = mean(sel.iter().zip(oracle).map(|(a, b)| hit(a == b)));
            let cross = mean(sel.iter().zip(&eval.samples).map(|(&i, s)| hit(pool.get(i).label != s.label)));
            (Some(agree), Some(cross))
        }
        None => (None, None),
    };
    let entropies: Option<Vec<f64>> = outcomes.iter().map(|o| o.entropy).collect();
    let mean_entropy = entropies.map(|e| mean(e.into_iter()));
    Ok(Metrics { accuracy, oracle_agreement, cross_class_rate, mean_entropy })
}

/// Shannon entropy in nats; zero-probability entries contribute nothing.
pub fn entropy(p: &[f64]) -> f64 {
    -p.iter().filter(|&&x| x > 0.0).map(|&x| x * x.ln()).sum::<f64>()
}
