//! Gumbel noise and the straight-through categorical sample.

use diffmath::{Tape, Tensor, Var};
use rand::Rng;
use selector::{argmax, SelectorError};

/// Clamp applied to the uniform draw before the double log.
pub const GUMBEL_EPS: f64 = 1e-12;

pub fn gumbel_from_uniform(u: f64) -> f64 {
    let u = u.clamp(GUMBEL_EPS, 1.0 - GUMBEL_EPS);
    -(-u.ln()).ln()
}

pub fn gumbel_noise<R: Rng>(rng: &mut R) -> f64 {
    gumbel_from_uniform(rng.random::<f64>())
}

pub fn gumbel_matrix<R: Rng>(rng: &mut R, rows: usize, cols: usize) -> Tensor {
    let data = (0..rows * cols).map(|_| gumbel_noise(rng)).collect();
    Tensor::from_vec(rows, cols, data).expect("sized")
}

/// Straight-through sample from each row of `scores` using fixed noise.
/// The forward value is one-hot at `argmax(s + g)`; the backward pass is
/// that of `softmax((s + g) / tau)`.
pub fn gumbel_softmax_select_with_noise(tape: &mut Tape, scores: Var, tau: f64, noise: &Tensor) -> Result<(Var, Vec<usize>), SelectorError> {
    let (b, n) = tape.value(scores).shape();
    if noise.shape() != (b, n) {
        return Err(diffmath::DiffError::Shape { op: "gumbel", left: (b, n), right: noise.shape() }.into());
    }
    let s = tape.value(scores);
    for r in 0..b {
        if s.row_slice(r).iter().all(|&v| v == f64::NEG_INFINITY) {
            return Err(SelectorError::EmptyPool);
        }
    }
    let g = tape.constant(noise.clone());
    let perturbed = tape.add(scores, g)?;
    let idx: Vec<usize> = (0..b).map(|r| argmax(tape.value(perturbed).row_slice(r))).collect();
    let tempered = tape.scale(perturbed, 1.0 / tau);
    let soft = tape.softmax(tempered)?;
    let hard = tape.straight_through(soft, &idx)?;
    Ok((hard, idx))
}

pub fn gumbel_softmax_select<R: Rng>(tape: &mut Tape, scores: Var, tau: f64, rng: &mut R) -> Result<(Var, Vec<usize>), SelectorError> {
    let (b, n) = tape.value(scores).shape();
    let noise = gumbel_matrix(rng, b, n);
    gumbel_softmax_select_with_noise(tape, scores, tau, &noise)
}
