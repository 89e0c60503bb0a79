//! Shared query/candidate encoder, inner-product utility scores, and
//! argmax selection with leakage masking.

use diffmath::{DiffError, Parameter, Tape, Tensor, Var};
use rand::Rng;
use synthbench::CandidatePool;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SelectorError {
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("no candidate left after leakage exclusion")]
    EmptyPool,
}

/// Uniform `[-1/sqrt(fan_in), 1/sqrt(fan_in)]` weights for an `out x fan_in` layer.
pub fn uniform_init<R: Rng>(rng: &mut R, out: usize, fan_in: usize) -> Tensor {
    let a = 1.0 / (fan_in as f64).sqrt();
    let data = (0..out * fan_in).map(|_| rng.random_range(-a..=a)).collect();
    Tensor::from_vec(out, fan_in, data).expect("sized")
}

/// Two-layer tanh encoder `D_in -> H -> D`, applied to queries and
/// candidates alike.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectorNet {
    params: [Parameter; 4],
}

/// Tape handles for one binding of a [`SelectorNet`].
#[derive(Debug, Clone, Copy)]
pub struct SelectorVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl SelectorVars {
    pub fn all(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

impl SelectorNet {
    pub fn init<R: Rng>(d_in: usize, hidden: usize, dim: usize, rng: &mut R) -> Self {
        let w1 = uniform_init(rng, hidden, d_in);
        let w2 = uniform_init(rng, dim, hidden);
        Self::from_weights(w1, Tensor::zeros(1, hidden), w2, Tensor::zeros(1, dim)).expect("consistent")
    }

    pub fn zeros(d_in: usize, hidden: usize, dim: usize) -> Self {
        Self::from_weights(Tensor::zeros(hidden, d_in), Tensor::zeros(1, hidden), Tensor::zeros(dim, hidden), Tensor::zeros(1, dim))
            .expect("consistent")
    }

    pub fn from_weights(w1: Tensor, b1: Tensor, w2: Tensor, b2: Tensor) -> Result<Self, DiffError> {
        let mismatch = |l: &Tensor, r: &Tensor| DiffError::Shape { op: "selector", left: l.shape(), right: r.shape() };
        if b1.shape() != (1, w1.rows()) {
            return Err(mismatch(&w1, &b1));
        }
        if w2.cols() != w1.rows() {
            return Err(mismatch(&w1, &w2));
        }
        if b2.shape() != (1, w2.rows()) {
            return Err(mismatch(&w2, &b2));
        }
        Ok(SelectorNet {
            params: [
                Parameter::new("selector.w1", w1),
                Parameter::new("selector.b1", b1),
                Parameter::new("selector.w2", w2),
                Parameter::new("selector.b2", b2),
            ],
        })
    }

    pub fn d_in(&self) -> usize {
        self.params[0].value.cols()
    }

    pub fn hidden(&self) -> usize {
        self.params[0].value.rows()
    }

    pub fn dim(&self) -> usize {
        self.params[2].value.rows()
    }

    pub fn params(&self) -> &[Parameter] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Parameter] {
        &mut self.params
    }

    /// Places the weights on `tape`, as trainable leaves or constants.
    pub fn bind(&self, tape: &mut Tape, trainable: bool) -> SelectorVars {
        let [w1, b1, w2, b2] = self.params.each_ref().map(|p| tape.leaf(p.value.clone(), trainable));
        SelectorVars { w1, b1, w2, b2 }
    }

    /// Embeds each row of `x` (`n x D_in`) into an `n x D` node.
    pub fn embed(&self, tape: &mut Tape, v: &SelectorVars, x: Var) -> Result<Var, DiffError> {
        if tape.value(x).cols() != self.d_in() {
            return Err(DiffError::Shape { op: "embed", left: (1, self.d_in()), right: tape.value(x).shape() });
        }
        let h = tape.matmul_nt(x, v.w1)?;
        let h = tape.add_row(h, v.b1)?;
        let h = tape.tanh(h);
        let z = tape.matmul_nt(h, v.w2)?;
        tape.add_row(z, v.b2)
    }

    /// Untracked embeddings of the rows of `x`.
    pub fn embed_rows(&self, x: &Tensor) -> Result<Tensor, DiffError> {
        let mut tape = Tape::new();
        let v = self.bind(&mut tape, false);
        let xv = tape.constant(x.clone());
        let z = self.embed(&mut tape, &v, xv)?;
        Ok(tape.value(z).clone())
    }

    /// Score matrix `B x N` between query rows and candidate rows, with
    /// masked entries set to -inf.
    pub fn score_matrix(&self, tape: &mut Tape, v: &SelectorVars, xq: Var, xc: Var, masks: &[Vec<bool>]) -> Result<Var, SelectorError> {
        let zq = self.embed(tape, v, xq)?;
        let zc = self.embed(tape, v, xc)?;
        let s = tape.matmul_nt(zq, zc)?;
        apply_masks(tape, s, masks)
    }
}

/// Adds -inf at masked entries. Rows that end up fully masked are an error.
pub fn apply_masks(tape: &mut Tape, s: Var, masks: &[Vec<bool>]) -> Result<Var, SelectorError> {
    let (b, n) = tape.value(s).shape();
    if masks.is_empty() || masks.iter().all(|m| m.iter().all(|&x| !x)) {
        return Ok(s);
    }
    if masks.len() != b || masks.iter().any(|m| m.len() != n) {
        return Err(DiffError::Shape { op: "mask", left: (b, n), right: (masks.len(), masks.first().map_or(0, |m| m.len())) }.into());
    }
    let mut add = Tensor::zeros(b, n);
    for (r, m) in masks.iter().enumerate() {
        if m.iter().all(|&x| x) {
            return Err(SelectorError::EmptyPool);
        }
        for (j, &x) in m.iter().enumerate() {
            if x {
                add.set(r, j, f64::NEG_INFINITY);
            }
        }
    }
    let mv = tape.constant(add);
    Ok(tape.add(s, mv)?)
}

/// Utility of a candidate: `z_q . z_c`.
pub fn score(tape: &mut Tape, zq: Var, zc: Var) -> Result<Var, DiffError> {
    tape.dot(zq, zc)
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtilityScores {
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub pool_version: String,
}

/// Pool embeddings computed once for a fixed encoder.
#[derive(Debug, Clone)]
pub struct EmbeddedPool {
    pub embeddings: Tensor,
    pub version: String,
}

impl EmbeddedPool {
    pub fn new(net: &SelectorNet, pool: &CandidatePool) -> Result<Self, SelectorError> {
        let x = Tensor::from_vec(pool.len(), pool.d_in(), pool.matrix().to_vec())?;
        Ok(EmbeddedPool { embeddings: net.embed_rows(&x)?, version: pool.version().to_string() })
    }
}

/// Scores an already-embedded query against an embedded pool. Masked
/// candidates get score -inf and probability 0.
pub fn score_embedded(zq: &[f64], pool: &EmbeddedPool, mask: &[bool]) -> Result<UtilityScores, SelectorError> {
    let n = pool.embeddings.rows();
    if zq.len() != pool.embeddings.cols() {
        return Err(DiffError::Shape { op: "score", left: (1, zq.len()), right: pool.embeddings.shape() }.into());
    }
    if n == 0 || (mask.len() == n && mask.iter().all(|&m| m)) {
        return Err(SelectorError::EmptyPool);
    }
    let scores: Vec<f64> = (0..n)
        .map(|i| {
            if mask.get(i).copied().unwrap_or(false) {
                f64::NEG_INFINITY
            } else {
                zq.iter().zip(pool.embeddings.row_slice(i)).map(|(a, b)| a * b).sum()
            }
        })
        .collect();
    let probabilities = diffmath::softmax_slice(&scores)?;
    Ok(UtilityScores { scores, probabilities, pool_version: pool.version.clone() })
}

/// Scores one query against every pool candidate, masking the query's group.
pub fn score_pool(net: &SelectorNet, x_q: &[f64], query_group: u64, pool: &CandidatePool) -> Result<UtilityScores, SelectorError> {
    let emb = EmbeddedPool::new(net, pool)?;
    let zq = net.embed_rows(&Tensor::row(x_q.to_vec()))?;
    score_embedded(zq.data(), &emb, &pool.leakage_mask(query_group))
}

/// Lowest index attaining the maximum.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Index of the most probable candidate; ties go to the lowest index.
pub fn select_argmax(u: &UtilityScores) -> usize {
    argmax(&u.probabilities)
}
