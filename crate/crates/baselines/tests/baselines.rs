//! Retrieval rules, control contexts and baseline runs.

use baselines::*;
use diffmath::Tensor;
use hybrid_trainer::{HybridConfig, ModelConfig, Models};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use selector::SelectorNet;
use synthbench::{generate, BenchmarkKind, BenchmarkSpec, CandidatePool, LabeledSample};

fn sample(features: Vec<f64>, group: u64) -> LabeledSample {
    LabeledSample { features, label: 0, group, key: None }
}

fn pool_of(rows: Vec<(Vec<f64>, u64)>) -> CandidatePool {
    let d = rows[0].0.len();
    CandidatePool::new(rows.into_iter().map(|(f, g)| sample(f, g)).collect(), d, 0.5).unwrap()
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn random_retrieval_on_singleton_pool() {
    let pool = pool_of(vec![(vec![1.0, 2.0], 5)]);
    let mut r = rng(1);
    assert!((0..100).all(|_| retrieve_random(&pool, &mut r, 9).unwrap() == 0));
    assert!(matches!(retrieve_random(&pool, &mut r, 5), Err(BaselineError::EmptyPool(5))));
}

#[test]
fn random_retrieval_is_uniform_over_unmasked() {
    // Candidates 1 and 4 belong to the query's group.
    let groups = [0, 7, 1, 2, 7, 3];
    let pool = pool_of(groups.iter().map(|&g| (vec![g as f64], g)).collect());
    let n = 100_000;
    let mut counts = [0usize; 6];
    let mut r = rng(2);
    for _ in 0..n {
        counts[retrieve_random(&pool, &mut r, 7).unwrap()] += 1;
    }
    assert_eq!(counts[1] + counts[4], 0);
    let sigma = (0.25 * 0.75 / n as f64).sqrt();
    for i in [0, 2, 3, 5] {
        let f = counts[i] as f64 / n as f64;
        assert!((f - 0.25).abs() < 3.0 * sigma, "candidate {i}: {f}");
    }
}

#[test]
fn frozen_retrieval_finds_exact_copy() {
    // Small first-layer weights keep tanh in its linear range, so the encoder
    // is a scaled isometry and the copy wins among equal-norm candidates.
    let d = 6;
    let eye = |n: usize, s: f64| {
        let mut t = Tensor::zeros(n, n);
        (0..n).for_each(|i| t.set(i, i, s));
        t
    };
    let net = SelectorNet::from_weights(eye(d, 1e-3), Tensor::zeros(1, d), eye(d, 1.0), Tensor::zeros(1, d)).unwrap();
    let mut r = rng(3);
    let unit = |r: &mut ChaCha8Rng| {
        let v: Vec<f64> = (0..d).map(|_| r.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.into_iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    for trial in 0..20 {
        let q = unit(&mut r);
        let mut rows: Vec<(Vec<f64>, u64)> = (0..8).map(|g| (unit(&mut r), g)).collect();
        let at = trial % 8;
        rows[at] = (q.clone(), 100);
        let pool = pool_of(rows);
        assert_eq!(retrieve_frozen_similarity(&net, &q, 50, &pool).unwrap(), at);
        // the copy is masked once it shares the query's group
        assert_ne!(retrieve_frozen_similarity(&net, &q, 100, &pool).unwrap(), at);
    }
}

#[test]
fn frozen_retrieval_falls_for_distractors() {
    for seed in [17, 23, 42] {
        let bench = generate(&BenchmarkSpec::keymatch(seed)).unwrap();
        let models = Models::init(bench.spec.d_in(), bench.spec.classes, &ModelConfig::default(), seed);
        let fr = FrozenRetriever::new(models.selector, &bench.pool).unwrap();
        let (mut trapped, mut total) = (0, 0);
        for (q, t) in bench.eval.samples.iter().zip(&bench.eval_traps) {
            let pick = fr.select(&q.features, q.group, &bench.pool).unwrap();
            assert_eq!(pick, fr.select(&q.features, q.group, &bench.pool).unwrap());
            total += 1;
            trapped += usize::from(Some(pick) == *t);
        }
        let rate = trapped as f64 / total as f64;
        assert!(rate >= 0.9, "seed {seed}: trapped on {rate}");
    }
}

#[test]
fn feature_average_examples() {
    let pool = pool_of(vec![(vec![1.0, 0.0], 0), (vec![0.0, 1.0], 1), (vec![2.0, 2.0], 2), (vec![5.0, 5.0], 3)]);
    let (ctx, top) = feature_average(&[0.3, 0.9, 0.1, f64::NEG_INFINITY], &pool, 1).unwrap();
    assert_eq!(ctx, vec![0.0, 1.0]);
    assert_eq!(top, vec![(1, 1.0)]);
    let (ctx, _) = feature_average(&[0.5, 0.5, -1.0, f64::NEG_INFINITY], &pool, 2).unwrap();
    assert_eq!(ctx, vec![0.5, 0.5]);
    let s = [1f64.ln(), 2f64.ln(), 3f64.ln(), f64::NEG_INFINITY];
    let (_, top) = feature_average(&s, &pool, 3).unwrap();
    let w: Vec<(usize, f64)> = vec![(2, 0.5), (1, 2.0 / 6.0), (0, 1.0 / 6.0)];
    for ((i, a), (j, b)) in top.iter().zip(&w) {
        assert_eq!(i, j);
        assert!((a - b).abs() < 1e-12);
    }
    assert!(matches!(feature_average(&s, &pool, 0), Err(BaselineError::InvalidArgument(_))));
    assert!(matches!(feature_average(&s, &pool, 4), Err(BaselineError::InvalidArgument(_))));
}

#[test]
fn control_contexts() {
    let x: Vec<f64> = (0..32).map(|i| i as f64 / 10.0).collect();
    let mut r = rng(4);
    assert!(make_control_context(ControlKind::Blank, &x, &mut r).iter().all(|&v| v == 0.0));
    assert_eq!(make_control_context(ControlKind::Duplicate, &x, &mut r), x);
    let n = 10_000;
    let mean_sq = (0..n)
        .map(|_| {
            let c = make_control_context(ControlKind::Noisy, &x, &mut r);
            c.iter().zip(&x).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 32.0
        })
        .sum::<f64>()
        / n as f64;
    assert!((mean_sq - 0.01).abs() < 0.0005, "{mean_sq}");
}

#[test]
fn kinds_round_trip() {
    for k in BaselineKind::ALL {
        assert_eq!(k.tag().parse::<BaselineKind>().unwrap(), k);
    }
    assert_eq!("frozen_similarity".parse::<BaselineKind>().unwrap(), BaselineKind::FrozenSimilarity);
    assert!(matches!("tacs".parse::<BaselineKind>(), Err(BaselineError::UnknownKind(_))));
}

fn small(kind: BenchmarkKind, seed: u64) -> synthbench::Benchmark {
    generate(&BenchmarkSpec { train_size: 128, eval_size: 64, ..BenchmarkSpec::default_for(kind, seed) }).unwrap()
}

#[test]
fn no_context_report_has_no_selection_statistics() {
    let bench = small(BenchmarkKind::Keymatch, 5);
    let r = run_baseline(BaselineKind::NoContext, &bench, &HybridConfig { epochs: 2, ..Default::default() }, &ModelConfig::default(), &BaselineOptions::default(), 1).unwrap();
    for e in &r.epochs {
        assert!(e.eval.oracle_agreement.is_none() && e.eval.cross_class_rate.is_none() && e.eval.mean_entropy.is_none());
        assert!(e.train_oracle_agreement.is_none());
    }
    assert_eq!(r.method, "no_context");
}

#[test]
fn frozen_selections_never_change() {
    let bench = small(BenchmarkKind::Crossclass, 6);
    let cfg = HybridConfig { epochs: 3, seed: 6, ..Default::default() };
    for kind in [BaselineKind::FrozenSimilarity, BaselineKind::FeatureAveraged] {
        let r = run_baseline(kind, &bench, &cfg, &ModelConfig::default(), &BaselineOptions::default(), 2).unwrap();
        let first = &r.epochs[0];
        for e in &r.epochs {
            assert_eq!(e.eval.oracle_agreement, first.eval.oracle_agreement);
            assert_eq!(e.eval.cross_class_rate, first.eval.cross_class_rate);
            assert_eq!(e.train_oracle_agreement, first.train_oracle_agreement);
        }
    }
}

#[test]
fn frozen_baseline_uses_selector_initialization() {
    let bench = small(BenchmarkKind::Keymatch, 7);
    let cfg = HybridConfig { epochs: 0, seed: 7, ..Default::default() };
    let r = run_baseline(BaselineKind::FrozenSimilarity, &bench, &cfg, &ModelConfig::default(), &BaselineOptions::default(), 1).unwrap();
    let models = Models::init(bench.spec.d_in(), bench.spec.classes, &ModelConfig::default(), 7);
    let tacs = hybrid_trainer::eval::evaluate_selector(&models.selector, &models.task, &bench.eval, &bench.eval_oracle, &bench.pool, 1).unwrap();
    assert_eq!(r.epochs[0].eval.oracle_agreement, tacs.oracle_agreement);
    assert_eq!(r.epochs[0].eval.accuracy, tacs.accuracy);
}

#[test]
fn baseline_runs_are_deterministic() {
    let bench = small(BenchmarkKind::Keymatch, 8);
    let cfg = HybridConfig { epochs: 2, seed: 8, ..Default::default() };
    for kind in BaselineKind::ALL {
        let a = run_baseline(kind, &bench, &cfg, &ModelConfig::default(), &BaselineOptions::default(), 1).unwrap();
        let b = run_baseline(kind, &bench, &cfg, &ModelConfig::default(), &BaselineOptions::default(), 3).unwrap();
        assert_eq!(a, b, "{kind}");
    }
}

#[test]
fn oracle_contexts_make_keymatch_solvable() {
    for seed in [17, 23, 42] {
        let bench = generate(&BenchmarkSpec::keymatch(seed)).unwrap();
        let r = run_oracle(&bench, &HybridConfig { seed, ..Default::default() }, &ModelConfig::default()).unwrap();
        let acc = r.last().eval.accuracy;
        assert!(acc >= 0.98, "seed {seed}: {acc}");
        assert_eq!(r.last().eval.oracle_agreement, Some(1.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn retrieval_respects_masking(seed in 0u64..10_000, n in 2usize..10, own in 0u64..3) {
        let mut r = rng(seed);
        let rows: Vec<(Vec<f64>, u64)> = (0..n).map(|i| (vec![r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)], (i % 3) as u64)).collect();
        let owned = rows.iter().filter(|(_, g)| *g == own).count();
        prop_assume!(owned < n);
        let pool = pool_of(rows);
        let net = SelectorNet::init(2, 4, 3, &mut r);
        let q = [r.random_range(-1.0..1.0), r.random_range(-1.0..1.0)];
        let fr = FrozenRetriever::new(net, &pool).unwrap();
        for pick in [retrieve_random(&pool, &mut r, own).unwrap(), fr.select(&q, own, &pool).unwrap()] {
            prop_assert_ne!(pool.get(pick).group, own);
        }
        let u = fr.utilities(&q, own, &pool).unwrap();
        let (_, top) = feature_average(&u.scores, &pool, n - owned).unwrap();
        for (i, _) in top {
            prop_assert_ne!(pool.get(i).group, own);
        }
    }
}
