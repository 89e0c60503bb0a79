//! Noise-free evaluation by argmax selection.

use diffmath::Tensor;
use selector::{argmax, score_embedded, EmbeddedPool, SelectorNet};
use synthbench::{entropy, eval_metrics, CandidatePool, Dataset, Metrics, QueryOutcome};
use tasknet::TaskNet;

use crate::TrainError;

/// Worker count for read-only evaluation, from `TACSLAB_THREADS` (default 1).
pub fn eval_threads() -> usize {
    std::env::var("TACSLAB_THREADS").ok().and_then(|v| v.trim().parse().ok()).filter(|&n| n > 0).unwrap_or(1)
}

/// Maps `f` over `0..n` in contiguous chunks on up to `threads` workers.
/// Output order matches the sequential order.
pub fn parallel_map<T, F>(n: usize, threads: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync,
{
    let threads = threads.clamp(1, n.max(1));
    if threads == 1 {
        return (0..n).map(&f).collect();
    }
    let chunk = n.div_ceil(threads);
    std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let f = &f;
                s.spawn(move || (t * chunk..((t + 1) * chunk).min(n)).map(f).collect::<Vec<T>>())
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("eval worker panicked")).collect()
    })
}

/// Argmax pick and selection entropy for every query of `split`.
pub fn select_all(net: &SelectorNet, split: &Dataset, pool: &CandidatePool, threads: usize) -> Result<Vec<(usize, f64)>, TrainError> {
    let emb = EmbeddedPool::new(net, pool)?;
    let rows: Vec<&[f64]> = split.samples.iter().map(|s| s.features.as_slice()).collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let zq = net.embed_rows(&Tensor::stack(&rows)?)?;
    let picks = parallel_map(split.len(), threads, |i| {
        let u = score_embedded(zq.row_slice(i), &emb, &pool.leakage_mask(split.samples[i].group))?;
        Ok::<_, TrainError>((argmax(&u.probabilities), entropy(&u.probabilities)))
    });
    picks.into_iter().collect()
}

/// Tasknet predictions for `split` given one context row per query, or the
/// null context when `contexts` is `None`.
pub fn predict(task: &TaskNet, split: &Dataset, contexts: Option<&Tensor>) -> Result<Vec<usize>, TrainError> {
    let rows: Vec<&[f64]> = split.samples.iter().map(|s| s.features.as_slice()).collect();
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let xq = Tensor::stack(&rows)?;
    let logits = match contexts {
        Some(c) => task.logits(&xq, c)?,
        None => task.logits_noctx(&xq)?,
    };
    Ok((0..logits.rows()).map(|r| argmax(logits.row_slice(r))).collect())
}

/// Fraction of queries whose argmax pick is the oracle candidate.
pub fn oracle_agreement(net: &SelectorNet, split: &Dataset, oracle: &[usize], pool: &CandidatePool, threads: usize) -> Result<f64, TrainError> {
    let picks = select_all(net, split, pool, threads)?;
    let hits = picks.iter().zip(oracle).filter(|((p, _), o)| p == *o).count();
    Ok(hits as f64 / picks.len().max(1) as f64)
}

/// Full metrics for selector-driven retrieval.
pub fn evaluate_selector(
    net: &SelectorNet,
    task: &TaskNet,
    split: &Dataset,
    oracle: &[usize],
    pool: &CandidatePool,
    threads: usize,
) -> Result<Metrics, TrainError> {
    let picks = select_all(net, split, pool, threads)?;
    let idx: Vec<usize> = picks.iter().map(|p| p.0).collect();
    let ctx = crate::pool_tensor(pool).gather_rows(&idx);
    let preds = predict(task, split, Some(&ctx))?;
    let outcomes: Vec<QueryOutcome> = preds
        .into_iter()
        .zip(&picks)
        .map(|(prediction, &(i, h))| QueryOutcome { prediction, selected: Some(i), entropy: Some(h) })
        .collect();
    Ok(eval_metrics(&outcomes, split, oracle, pool)?)
}
