use proptest::prelude::*;
use synthbench::{
    build_pool, entropy, eval_metrics, export, gen_crossclass, gen_keymatch, seeding, BenchmarkSpec, Dataset, LabeledSample,
    QueryOutcome,
};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn keymatch_distractor_beats_holder_on_raw_similarity() {
    for seed in [17, 23, 42] {
        let b = gen_keymatch(&BenchmarkSpec::keymatch(seed)).unwrap();
        for (set, oracle, traps) in [
            (&b.train, &b.train_oracle, &b.train_traps),
            (&b.eval, &b.eval_oracle, &b.eval_traps),
        ] {
            let wins = set
                .samples
                .iter()
                .zip(oracle)
                .zip(traps)
                .filter(|((q, &o), t)| {
                    let t = t.expect("every keymatch query has a distractor");
                    assert!(b.pool.get(t).key.is_none(), "distractor carries no key");
                    dot(&q.features, &b.pool.get(t).features) > dot(&q.features, &b.pool.get(o).features)
                })
                .count();
            assert!(wins as f64 >= 0.95 * set.len() as f64, "seed {seed}: {wins}/{}", set.len());
        }
    }
}

#[test]
fn keymatch_oracle_is_the_unique_holder_of_the_key() {
    let b = gen_keymatch(&BenchmarkSpec::keymatch(7)).unwrap();
    for (q, &o) in b.eval.samples.iter().zip(&b.eval_oracle) {
        let holders: Vec<usize> = (0..b.pool.len()).filter(|&i| b.pool.get(i).key == q.key).collect();
        assert_eq!(holders, vec![o]);
    }
}

#[test]
fn keymatch_label_is_query_code_plus_holder_code() {
    let spec = BenchmarkSpec::keymatch(3);
    let b = gen_keymatch(&spec).unwrap();
    let qc = spec.keys * spec.key_dims();
    for (q, &o) in b.train.samples.iter().zip(&b.train_oracle) {
        let cq = (0..spec.classes).find(|&j| q.features[qc + j] == 1.0).unwrap();
        assert_eq!(q.label, (cq + b.pool.get(o).label) % spec.classes);
    }
}

/// Holder codes are a shuffled balanced assignment, so the prior over
/// them is uniform over balanced assignments. The query reveals its holder
/// and c_q; with no helpful-distractor bias its distractor is independent
/// of the codes. Enumerating all assignments gives the label posterior.
#[test]
fn keymatch_no_context_bayes_accuracy_is_exactly_chance() {
    let spec = BenchmarkSpec {
        classes: 2,
        keys: 4,
        distractors: 4,
        eval_distractors: 2,
        train_size: 64,
        eval_size: 32,
        ..BenchmarkSpec::keymatch(5)
    };
    let b = gen_keymatch(&spec).unwrap();
    let (c, k, m) = (spec.classes, spec.keys, spec.key_dims());
    let balanced: Vec<Vec<usize>> = (0..c.pow(k as u32))
        .map(|mut n| {
            (0..k)
                .map(|_| {
                    let d = n % c;
                    n /= c;
                    d
                })
                .collect::<Vec<usize>>()
        })
        .filter(|a| (0..c).all(|v| a.iter().filter(|&&x| x == v).count() == k / c))
        .collect();
    let qc = k * m;
    let mut correct = 0.0;
    for q in &b.eval.samples {
        let kd = q.features[..qc].iter().position(|&v| v != 0.0).unwrap();
        let h = kd / m;
        let cq = (0..c).find(|&j| q.features[qc + j] == 1.0).unwrap();
        let mut post = vec![0.0; c];
        for a in &balanced {
            post[(cq + a[h]) % c] += 1.0;
        }
        let z: f64 = post.iter().sum();
        for p in &mut post {
            *p /= z;
        }
        for p in &post {
            assert!((p - 1.0 / c as f64).abs() < 1e-15);
        }
        // Bayes decision with lowest-index ties; its expected accuracy is
        // the posterior mass of the chosen label.
        correct += post.iter().cloned().fold(0.0, f64::max);
    }
    assert_eq!(correct / b.eval.len() as f64, 1.0 / c as f64);
}

#[test]
fn crossclass_construction() {
    for seed in [17, 23, 42] {
        let spec = BenchmarkSpec::crossclass(seed);
        let b = gen_crossclass(&spec).unwrap();
        for (q, (&o, t)) in b.eval.samples.iter().zip(b.eval_oracle.iter().zip(&b.eval_traps)) {
            assert_ne!(b.pool.get(o).label, q.label, "oracle must be cross-class");
            let t = t.unwrap();
            assert_eq!(b.pool.get(t).label, q.label, "trap must be same-class");
            assert!(dot(&q.features, &b.pool.get(t).features) > dot(&q.features, &b.pool.get(o).features));
        }
        for (q, &o) in b.train.samples.iter().zip(&b.train_oracle) {
            assert_ne!(b.pool.get(o).label, q.label);
        }
    }
}

/// The label is `(c_h + 1 + c_q) mod C` with `c_h` uniform given the
/// query, so every label has posterior `1/C` without the prototype.
#[test]
fn crossclass_chance_level_is_one_over_c() {
    let spec = BenchmarkSpec::crossclass(1);
    let c = spec.classes;
    let mut counts = vec![0usize; c];
    for ch in 0..c {
        for cq in 0..c - 1 {
            counts[(ch + 1 + cq) % c] += 1;
        }
    }
    // Each label is reachable from exactly C-1 of the C codes for a fixed
    // offset, and the code is uniform, so the posterior is flat.
    for cq in 0..c - 1 {
        let mut post = vec![0.0; c];
        for ch in 0..c {
            post[(ch + 1 + cq) % c] += 1.0 / c as f64;
        }
        assert!(post.iter().all(|&p| (p - 1.0 / c as f64).abs() < 1e-15));
    }
    assert!(counts.iter().all(|&n| n == c - 1));
}

#[test]
fn eval_queries_never_share_a_group_with_the_pool() {
    for b in [gen_keymatch(&BenchmarkSpec::keymatch(9)).unwrap(), gen_crossclass(&BenchmarkSpec::crossclass(9)).unwrap()] {
        for q in &b.eval.samples {
            assert!(b.pool.leakage_mask(q.group).iter().all(|&m| !m));
        }
    }
}

#[test]
fn generation_is_a_pure_function_of_spec() {
    let a = gen_keymatch(&BenchmarkSpec::keymatch(17)).unwrap();
    let b = gen_keymatch(&BenchmarkSpec::keymatch(17)).unwrap();
    let c = gen_keymatch(&BenchmarkSpec::keymatch(23)).unwrap();
    assert_eq!(a.snapshot_hash(), b.snapshot_hash());
    assert_ne!(a.snapshot_hash(), c.snapshot_hash());
    let x = gen_crossclass(&BenchmarkSpec::crossclass(17)).unwrap();
    let y = gen_crossclass(&BenchmarkSpec::crossclass(17)).unwrap();
    assert_eq!(x.snapshot_hash(), y.snapshot_hash());
}

#[test]
fn inconsistent_specs_are_rejected() {
    let spec = BenchmarkSpec { eval_distractors: 40, ..BenchmarkSpec::keymatch(1) };
    assert!(gen_keymatch(&spec).is_err());
    assert!(gen_keymatch(&BenchmarkSpec::crossclass(1)).is_err());
    let spec = BenchmarkSpec { pool_fraction: 1.0, ..BenchmarkSpec::crossclass(1) };
    assert!(gen_crossclass(&spec).is_err());
}

fn toy_dataset(n: usize) -> Dataset {
    let samples = (0..n)
        .map(|i| LabeledSample { features: vec![i as f64, 1.0], label: i % 3, group: i as u64, key: None })
        .collect();
    Dataset { d_in: 2, classes: 3, samples }
}

#[test]
fn build_pool_takes_a_fifth() {
    let d = toy_dataset(1000);
    let (pool, rest) = build_pool(&d, 0.2, &mut seeding::stream(1, "pool")).unwrap();
    assert_eq!(pool.len(), 200);
    assert_eq!(rest.len(), 800);
    let (again, _) = build_pool(&d, 0.2, &mut seeding::stream(1, "pool")).unwrap();
    assert_eq!(pool.version(), again.version());
}

#[test]
fn build_pool_rejects_empty_pool() {
    let d = toy_dataset(3);
    assert!(build_pool(&d, 0.1, &mut seeding::stream(1, "pool")).is_err());
    assert!(build_pool(&d, 0.0, &mut seeding::stream(1, "pool")).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn build_pool_partitions(n in 5usize..300, frac in 0.05f64..0.95, seed in any::<u64>()) {
        let d = toy_dataset(n);
        if let Ok((pool, rest)) = build_pool(&d, frac, &mut seeding::stream(seed, "pool")) {
            prop_assert_eq!(pool.len() + rest.len(), n);
            let mut groups: Vec<u64> = pool.candidates().iter().chain(&rest.samples).map(|s| s.group).collect();
            groups.sort();
            prop_assert_eq!(groups, (0..n as u64).collect::<Vec<_>>());
        }
    }

    #[test]
    fn substreams_are_reproducible(seed in any::<u64>(), idx in any::<u64>()) {
        use rand::Rng;
        let a: u64 = seeding::substream(seed, "policy", idx).random();
        let b: u64 = seeding::substream(seed, "policy", idx).random();
        let c: u64 = seeding::substream(seed, "gumbel", idx).random();
        prop_assert_eq!(a, b);
        prop_assert_ne!(a, c);
    }
}

#[test]
fn metrics_examples() {
    let b = gen_keymatch(&BenchmarkSpec::keymatch(2)).unwrap();
    let perfect: Vec<QueryOutcome> = b
        .eval
        .samples
        .iter()
        .zip(&b.eval_oracle)
        .map(|(q, &o)| QueryOutcome { prediction: q.label, selected: Some(o), entropy: Some(entropy(&[0.25; 4])) })
        .collect();
    let m = eval_metrics(&perfect, &b.eval, &b.eval_oracle, &b.pool).unwrap();
    assert_eq!(m.accuracy, 1.0);
    assert_eq!(m.oracle_agreement, Some(1.0));
    assert!((m.mean_entropy.unwrap() - 4f64.ln()).abs() < 1e-12);
    assert!(eval_metrics(&perfect[1..], &b.eval, &b.eval_oracle, &b.pool).is_err());
    let noctx: Vec<QueryOutcome> =
        b.eval.samples.iter().map(|_| QueryOutcome { prediction: 0, selected: None, entropy: None }).collect();
    let m = eval_metrics(&noctx, &b.eval, &b.eval_oracle, &b.pool).unwrap();
    assert_eq!(m.oracle_agreement, None);
    assert_eq!(m.cross_class_rate, None);
}

/// Uniform selection over a label-balanced pool differs from the query's
/// label with probability (C-1)/C.
#[test]
fn random_selection_cross_class_rate_is_binomial() {
    use rand::Rng;
    let spec = BenchmarkSpec::crossclass(4);
    let b = gen_crossclass(&spec).unwrap();
    let c = spec.classes;
    // Balance the pool by keeping the same number of candidates per label.
    let per = (0..c).map(|y| b.pool.candidates().iter().filter(|s| s.label == y).count()).min().unwrap();
    let mut keep = vec![];
    for y in 0..c {
        keep.extend((0..b.pool.len()).filter(|&i| b.pool.get(i).label == y).take(per));
    }
    let mut rng = seeding::stream(4, "policy");
    let n = 100_000;
    let mut cross = 0usize;
    for i in 0..n {
        let q = &b.eval.samples[i % b.eval.len()];
        let j = keep[rng.random_range(0..keep.len())];
        cross += usize::from(b.pool.get(j).label != q.label);
    }
    let p = (c - 1) as f64 / c as f64;
    let sigma = (p * (1.0 - p) / n as f64).sqrt();
    assert!((cross as f64 / n as f64 - p).abs() < 3.0 * sigma, "{} vs {p}", cross as f64 / n as f64);
}

#[test]
fn binary_export_round_trips() {
    let b = gen_keymatch(&BenchmarkSpec::keymatch(11)).unwrap();
    let mut buf = Vec::new();
    export::write_binary(&mut buf, b.pool.d_in(), 4, b.pool.candidates()).unwrap();
    assert_eq!(buf.len(), 24 + b.pool.len() * (8 * b.pool.d_in() + 24));
    let back = export::read_binary(&mut buf.as_slice()).unwrap();
    assert_eq!(back.samples, b.pool.candidates());
    assert!(export::read_binary(&mut &buf[..40]).is_err());
    let mut csv = Vec::new();
    export::write_csv(&mut csv, b.pool.d_in(), &b.eval.samples[..3]).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].ends_with("label,group,key"));
    assert_eq!(lines[1].split(',').count(), b.pool.d_in() + 3);
}

#[test]
fn binary_export_writes_to_disk() {
    let dir = tempfile::tempdir().unwrap();
    let b = gen_crossclass(&BenchmarkSpec::crossclass(11)).unwrap();
    let path = dir.path().join("train.bin");
    let mut f = std::fs::File::create(&path).unwrap();
    export::write_binary(&mut f, b.train.d_in, b.train.classes, &b.train.samples).unwrap();
    drop(f);
    let back = export::read_binary(&mut std::fs::File::open(&path).unwrap()).unwrap();
    assert_eq!(back, b.train);
}
