//! Key-match benchmark: the label needs a code only the key's holder carries.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::seeding::stream;
use crate::{BenchError, Benchmark, BenchmarkKind, BenchmarkSpec, CandidatePool, Dataset, LabeledSample};

pub(crate) fn unit_vector(rng: &mut ChaCha8Rng, d: usize, scale: f64) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-9 {
            return v.into_iter().map(|x| scale * x / n).collect();
        }
    }
}

/// Balanced code assignment: `n` codes cycling through `0..classes`, shuffled.
pub(crate) fn balanced_codes(rng: &mut ChaCha8Rng, n: usize, classes: usize) -> Vec<usize> {
    let mut c: Vec<usize> = (0..n).map(|i| i % classes).collect();
    c.shuffle(rng);
    c
}

/// Pool layout: holders `0..keys` first, then distractors. Holder `h` sets
/// all of its key coordinates and a one-hot code `c_h`. Distractors carry a
/// code and a payload direction but no key. A query sets one key
/// coordinate of its holder, a one-hot code `c_q`, and copies the payload
/// of one distractor; its label is `(c_q + c_h) mod C`.
pub fn gen_keymatch(spec: &BenchmarkSpec) -> Result<Benchmark, BenchError> {
    if spec.kind != BenchmarkKind::Keymatch {
        return Err(BenchError::Config("gen_keymatch needs a keymatch spec".into()));
    }
    spec.validate()?;
    let mut rng = stream(spec.seed, "dataset");
    let (c, k, m, nd) = (spec.classes, spec.keys, spec.key_dims(), spec.distractors);
    let d_in = spec.d_in();
    let (qc, cc, po) = (spec.query_code_offset(), spec.cand_code_offset(), spec.payload_offset());
    let ps = spec.payload_scale * spec.distractor_strength;

    let payloads: Vec<Vec<f64>> = (0..nd).map(|_| unit_vector(&mut rng, spec.payload_dims, ps)).collect();
    let holder_codes = balanced_codes(&mut rng, k, c);
    let n_train_d = nd - spec.eval_distractors;
    let mut dist_codes = balanced_codes(&mut rng, n_train_d, c);
    dist_codes.extend(balanced_codes(&mut rng, spec.eval_distractors, c));

    let mut cands = Vec::with_capacity(k + nd);
    for (h, &code) in holder_codes.iter().enumerate() {
        let mut f = vec![0.0; d_in];
        f[h * m..(h + 1) * m].iter_mut().for_each(|v| *v = spec.key_scale);
        f[cc + code] = 1.0;
        cands.push(LabeledSample { features: f, label: code, group: h as u64, key: Some(h) });
    }
    for (j, &code) in dist_codes.iter().enumerate() {
        let mut f = vec![0.0; d_in];
        f[cc + code] = 1.0;
        f[po..].copy_from_slice(&payloads[j]);
        cands.push(LabeledSample { features: f, label: code, group: (k + j) as u64, key: None });
    }
    let pool = CandidatePool::new(cands, d_in, (k + nd) as f64 / (k + nd + spec.train_size) as f64)?;

    let mut next_group = (k + nd) as u64;
    let mut make = |n: usize, dims: std::ops::Range<usize>, dists: std::ops::Range<usize>, rho: f64, rng: &mut ChaCha8Rng| {
        let key_dims: Vec<usize> = dims.flat_map(|i| (0..k).map(move |h| h * m + i)).collect();
        let dists: Vec<usize> = dists.collect();
        let mut rows = Vec::with_capacity(n);
        for i in 0..n {
            let kd = key_dims[i % key_dims.len()];
            let h = kd / m;
            let cq = rng.random_range(0..c);
            let helpful: Vec<usize> = dists.iter().copied().filter(|&j| dist_codes[j] == holder_codes[h]).collect();
            let choices = if !helpful.is_empty() && rng.random::<f64>() < rho { &helpful } else { &dists };
            let d = choices[rng.random_range(0..choices.len())];
            let mut f = vec![0.0; d_in];
            f[kd] = spec.key_scale;
            f[qc + cq] = 1.0;
            f[po..].copy_from_slice(&payloads[d]);
            let label = (cq + holder_codes[h]) % c;
            rows.push((LabeledSample { features: f, label, group: next_group, key: Some(h) }, (h, k + d)));
            next_group += 1;
        }
        rows.shuffle(rng);
        let (samples, idx): (Vec<_>, Vec<(usize, usize)>) = rows.into_iter().unzip();
        let (oracle, traps) = idx.into_iter().map(|(o, t)| (o, Some(t))).unzip();
        (Dataset { d_in, classes: c, samples }, oracle, traps)
    };
    let (train, train_oracle, train_traps) = make(spec.train_size, 0..spec.train_key_dims, 0..n_train_d, spec.helpful_distractor_rate, &mut rng);
    let (eval, eval_oracle, eval_traps) = make(spec.eval_size, spec.train_key_dims..m, n_train_d..nd, 0.0, &mut rng);
    Ok(Benchmark { spec: spec.clone(), train, eval, pool, train_oracle, eval_oracle, train_traps, eval_traps })
}
