//! Cross-class benchmark: the helpful candidate always has another label.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::keymatch::{balanced_codes, unit_vector};
use crate::seeding::stream;
use crate::{build_pool, BenchError, Benchmark, BenchmarkKind, BenchmarkSpec, CandidatePool, Dataset, LabeledSample};

/// Prototype `h` carries its key coordinates and a code `c_h`, and is
/// labelled `c_h`. A query carries one key coordinate of `h` and an offset
/// `c_q < C - 1`; its label is `(c_h + 1 + c_q) mod C`, never `c_h`.
/// Base samples of this form are split into training queries and pool
/// members. Evaluation queries copy the payload of a member sharing their
/// prototype and offset, a same-class near-duplicate. Training queries copy
/// the payload of any even-indexed member.
pub fn gen_crossclass(spec: &BenchmarkSpec) -> Result<Benchmark, BenchError> {
    if spec.kind != BenchmarkKind::Crossclass {
        return Err(BenchError::Config("gen_crossclass needs a crossclass spec".into()));
    }
    spec.validate()?;
    let mut rng = stream(spec.seed, "dataset");
    let (c, k, m, mt) = (spec.classes, spec.keys, spec.key_dims(), spec.train_key_dims);
    let d_in = spec.d_in();
    let (qc, cc, po) = (spec.query_code_offset(), spec.cand_code_offset(), spec.payload_offset());
    let ps = spec.payload_scale * spec.distractor_strength;
    let proto_codes = balanced_codes(&mut rng, k, c);
    let label = |h: usize, cq: usize| (proto_codes[h] + 1 + cq) % c;

    let query = |kd: usize, cq: usize, payload: &[f64]| {
        let mut f = vec![0.0; d_in];
        f[kd] = spec.key_scale;
        f[qc + cq] = 1.0;
        f[po..].copy_from_slice(payload);
        f
    };
    let offset_of = |s: &LabeledSample| (0..c - 1).find(|&j| s.features[qc + j] == 1.0).expect("one-hot offset");

    let base: Vec<LabeledSample> = (0..spec.train_size)
        .map(|i| {
            let h = i % k;
            let kd = h * m + (i / k) % mt;
            let cq = rng.random_range(0..c - 1);
            let payload = unit_vector(&mut rng, spec.payload_dims, ps);
            LabeledSample { features: query(kd, cq, &payload), label: label(h, cq), group: (k + i) as u64, key: Some(h) }
        })
        .collect();
    let base = Dataset { d_in, classes: c, samples: base };
    let mut pool_rng = stream(spec.seed, "pool");
    let (members, mut train) = build_pool(&base, spec.pool_fraction, &mut pool_rng)?;

    // Even-indexed members are payload sources for training queries,
    // odd-indexed ones for evaluation queries.
    let members = members.candidates().to_vec();
    let bucket = |s: &LabeledSample| (s.key.expect("keyed"), offset_of(s));
    let sources = |parity: usize| -> Vec<usize> { (0..members.len()).filter(|j| j % 2 == parity).collect() };
    let (train_src, eval_src) = (sources(0), sources(1));

    // Training payloads come from a uniformly chosen source, so the payload
    // says nothing about the training label.
    if train_src.is_empty() {
        return Err(BenchError::Config("pool too small to host training payload sources".into()));
    }
    let mut train_traps = Vec::with_capacity(train.len());
    let mut train_oracle = Vec::with_capacity(train.len());
    for q in &mut train.samples {
        let j = train_src[rng.random_range(0..train_src.len())];
        q.features[po..].copy_from_slice(&members[j].features[po..]);
        train_traps.push(Some(k + j));
        train_oracle.push(bucket(q).0);
    }

    let mut cands = Vec::with_capacity(k + members.len());
    for (h, &code) in proto_codes.iter().enumerate() {
        let mut f = vec![0.0; d_in];
        f[h * m..(h + 1) * m].iter_mut().for_each(|v| *v = spec.key_scale);
        f[cc + code] = 1.0;
        cands.push(LabeledSample { features: f, label: code, group: h as u64, key: Some(h) });
    }
    cands.extend(members.iter().cloned());
    let pool = CandidatePool::new(cands, d_in, spec.pool_fraction)?;

    if eval_src.is_empty() {
        return Err(BenchError::Config("pool too small to host evaluation near-duplicates".into()));
    }
    let first_group = (k + spec.train_size) as u64;
    let mut rows: Vec<(LabeledSample, usize, usize)> = (0..spec.eval_size)
        .map(|i| {
            let j = eval_src[rng.random_range(0..eval_src.len())];
            let (h, cq) = bucket(&members[j]);
            let kd = h * m + mt + i % spec.eval_key_dims;
            let f = query(kd, cq, &members[j].features[po..]);
            let s = LabeledSample { features: f, label: label(h, cq), group: first_group + i as u64, key: Some(h) };
            (s, h, k + j)
        })
        .collect();
    rows.shuffle(&mut rng);
    let eval_oracle = rows.iter().map(|r| r.1).collect();
    let eval_traps = rows.iter().map(|r| Some(r.2)).collect();
    let eval = Dataset { d_in, classes: c, samples: rows.into_iter().map(|r| r.0).collect() };
    Ok(Benchmark { spec: spec.clone(), train, eval, pool, train_oracle, eval_oracle, train_traps, eval_traps })
}
