//! Retrieval rules and control contexts.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use selector::{argmax, score_embedded, EmbeddedPool, SelectorNet};
use synthbench::CandidatePool;

use crate::{BaselineError, ControlKind};

/// Noise level of the noisy-query control.
pub const NOISE_SIGMA: f64 = 0.1;
/// Default number of candidates averaged by the feature-averaged baseline.
pub const DEFAULT_TOP_K: usize = 5;

/// Uniform draw over the candidates not in `query_group`.
pub fn retrieve_random<R: Rng>(pool: &CandidatePool, rng: &mut R, query_group: u64) -> Result<usize, BaselineError> {
    let open: Vec<usize> = pool.leakage_mask(query_group).iter().enumerate().filter(|(_, &m)| !m).map(|(i, _)| i).collect();
    if open.is_empty() {
        return Err(BaselineError::EmptyPool(query_group));
    }
    Ok(open[rng.random_range(0..open.len())])
}

/// Fixed-encoder similarity retrieval with the pool embedded once.
#[derive(Debug, Clone)]
pub struct FrozenRetriever {
    net: SelectorNet,
    pool: EmbeddedPool,
}

impl FrozenRetriever {
    pub fn new(net: SelectorNet, pool: &CandidatePool) -> Result<Self, BaselineError> {
        let emb = EmbeddedPool::new(&net, pool)?;
        Ok(FrozenRetriever { net, pool: emb })
    }

    pub fn net(&self) -> &SelectorNet {
        &self.net
    }

    /// Masked similarity scores and their softmax.
    pub fn utilities(&self, x_q: &[f64], query_group: u64, pool: &CandidatePool) -> Result<selector::UtilityScores, BaselineError> {
        if pool.version() != self.pool.version {
            return Err(BaselineError::InvalidArgument("pool changed since it was embedded".into()));
        }
        let zq = self.net.embed_rows(&diffmath::Tensor::row(x_q.to_vec()))?;
        let u = score_embedded(zq.data(), &self.pool, &pool.leakage_mask(query_group)).map_err(|e| match e {
            selector::SelectorError::EmptyPool => BaselineError::EmptyPool(query_group),
            other => other.into(),
        })?;
        Ok(u)
    }

    /// Most similar unmasked candidate; ties go to the lowest index.
    pub fn select(&self, x_q: &[f64], query_group: u64, pool: &CandidatePool) -> Result<usize, BaselineError> {
        Ok(argmax(&self.utilities(x_q, query_group, pool)?.scores))
    }
}

/// One-shot frozen similarity retrieval.
pub fn retrieve_frozen_similarity(frozen: &SelectorNet, x_q: &[f64], query_group: u64, pool: &CandidatePool) -> Result<usize, BaselineError> {
    FrozenRetriever::new(frozen.clone(), pool)?.select(x_q, query_group, pool)
}

/// Softmax over the `k` best scores, renormalized, applied to candidate
/// features. Returns the context and the chosen indices with weights.
pub fn feature_average(scores: &[f64], pool: &CandidatePool, k: usize) -> Result<(Vec<f64>, Vec<(usize, f64)>), BaselineError> {
    let open = scores.iter().filter(|s| s.is_finite()).count();
    if k == 0 || k > open {
        return Err(BaselineError::InvalidArgument(format!("k = {k} with {open} unmasked candidate(s)")));
    }
    let mut order: Vec<usize> = (0..scores.len()).filter(|&i| scores[i].is_finite()).collect();
    // stable sort keeps ties in index order
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(k);
    let top: Vec<f64> = order.iter().map(|&i| scores[i]).collect();
    let w = diffmath::softmax_slice(&top)?;
    let mut ctx = vec![0.0; pool.d_in()];
    for (&i, &wi) in order.iter().zip(&w) {
        for (c, x) in ctx.iter_mut().zip(&pool.get(i).features) {
            *c += wi * x;
        }
    }
    Ok((ctx, order.into_iter().zip(w).collect()))
}

pub fn build_feature_averaged_context(
    frozen: &FrozenRetriever,
    x_q: &[f64],
    query_group: u64,
    pool: &CandidatePool,
    k: usize,
) -> Result<Vec<f64>, BaselineError> {
    let u = frozen.utilities(x_q, query_group, pool)?;
    Ok(feature_average(&u.scores, pool, k)?.0)
}

pub fn make_control_context<R: Rng>(kind: ControlKind, x_q: &[f64], rng: &mut R) -> Vec<f64> {
    match kind {
        ControlKind::Blank => vec![0.0; x_q.len()],
        ControlKind::Duplicate => x_q.to_vec(),
        ControlKind::Noisy => {
            let n = Normal::new(0.0, NOISE_SIGMA).expect("valid sigma");
            x_q.iter().map(|x| x + n.sample(rng)).collect()
        }
    }
}
