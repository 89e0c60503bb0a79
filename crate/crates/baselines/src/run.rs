//! Tasknet training and evaluation for each baseline.

use diffmath::{Parameter, Tensor};
use hybrid_trainer::eval::{parallel_map, predict};
use hybrid_trainer::{epoch_batches, AbortInfo, EpochRecord, HybridConfig, LossRecord, ModelConfig, Models, Momentum, TrainReport};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use selector::argmax;
use synthbench::{entropy, eval_metrics, seeding, Benchmark, Dataset, QueryOutcome};
use tasknet::TaskNet;

use crate::retrieve::{feature_average, make_control_context, retrieve_random, FrozenRetriever};
use crate::{BaselineError, BaselineKind, ControlKind};

/// Offset separating per-query evaluation draws from the training stream.
const EVAL_SUBSTREAM: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineOptions {
    pub top_k: usize,
}

impl Default for BaselineOptions {
    fn default() -> Self {
        BaselineOptions { top_k: crate::DEFAULT_TOP_K }
    }
}

/// Per-query evaluation context with its selection statistics.
#[derive(Debug, Clone)]
struct Pick {
    ctx: Vec<f64>,
    selected: Option<usize>,
    entropy: Option<f64>,
}

/// Contexts that do not depend on training state.
#[derive(Debug, Clone)]
struct Fixed {
    train: Tensor,
    train_selected: Option<Vec<usize>>,
    eval: Vec<Pick>,
}

enum Strategy {
    NoContext,
    Random,
    Control(ControlKind),
    Fixed(Fixed),
}

fn rows(split: &Dataset) -> Vec<&[f64]> {
    split.samples.iter().map(|s| s.features.as_slice()).collect()
}

fn frozen_picks(fr: &FrozenRetriever, bench: &Benchmark, split: &Dataset, k: Option<usize>, threads: usize) -> Result<Vec<Pick>, BaselineError> {
    parallel_map(split.len(), threads, |i| {
        let s = &split.samples[i];
        let u = fr.utilities(&s.features, s.group, &bench.pool)?;
        let h = Some(entropy(&u.probabilities));
        Ok(match k {
            None => {
                let j = argmax(&u.scores);
                Pick { ctx: bench.pool.get(j).features.clone(), selected: Some(j), entropy: h }
            }
            Some(k) => {
                let (ctx, top) = feature_average(&u.scores, &bench.pool, k)?;
                Pick { ctx, selected: Some(top[0].0), entropy: h }
            }
        })
    })
    .into_iter()
    .collect()
}

fn fixed_from(train: Vec<Pick>, eval: Vec<Pick>) -> Result<Fixed, BaselineError> {
    let t: Vec<&[f64]> = train.iter().map(|p| p.ctx.as_slice()).collect();
    let train_selected = train.iter().map(|p| p.selected).collect();
    Ok(Fixed { train: Tensor::stack(&t)?, train_selected, eval })
}

fn oracle_picks(bench: &Benchmark, split: &Dataset, oracle: &[usize]) -> Vec<Pick> {
    (0..split.len()).map(|i| Pick { ctx: bench.pool.get(oracle[i]).features.clone(), selected: Some(oracle[i]), entropy: None }).collect()
}

impl Strategy {
    fn build(kind: BaselineKind, bench: &Benchmark, models: &Models, opts: &BaselineOptions, threads: usize) -> Result<Self, BaselineError> {
        Ok(match kind {
            BaselineKind::NoContext => Strategy::NoContext,
            BaselineKind::Random => Strategy::Random,
            BaselineKind::Blank => Strategy::Control(ControlKind::Blank),
            BaselineKind::Duplicate => Strategy::Control(ControlKind::Duplicate),
            BaselineKind::Noisy => Strategy::Control(ControlKind::Noisy),
            BaselineKind::FrozenSimilarity | BaselineKind::FeatureAveraged => {
                let fr = FrozenRetriever::new(models.selector.clone(), &bench.pool)?;
                let k = (kind == BaselineKind::FeatureAveraged).then_some(opts.top_k);
                let train = frozen_picks(&fr, bench, &bench.train, k, threads)?;
                let eval = frozen_picks(&fr, bench, &bench.eval, k, threads)?;
                Strategy::Fixed(fixed_from(train, eval)?)
            }
        })
    }

    fn train_contexts(&self, bench: &Benchmark, ids: &[usize], rng: &mut ChaCha8Rng) -> Result<Option<Tensor>, BaselineError> {
        let pick = |f: &mut dyn FnMut(usize) -> Result<Vec<f64>, BaselineError>| -> Result<Option<Tensor>, BaselineError> {
            let ctx = ids.iter().map(|&i| f(i)).collect::<Result<Vec<_>, _>>()?;
            let r: Vec<&[f64]> = ctx.iter().map(Vec::as_slice).collect();
            Ok(Some(Tensor::stack(&r)?))
        };
        let train = &bench.train.samples;
        match self {
            Strategy::NoContext => Ok(None),
            Strategy::Random => pick(&mut |i| Ok(bench.pool.get(retrieve_random(&bench.pool, rng, train[i].group)?).features.clone())),
            Strategy::Control(c) => pick(&mut |i| Ok(make_control_context(*c, &train[i].features, rng))),
            Strategy::Fixed(f) => Ok(Some(f.train.gather_rows(ids))),
        }
    }

    fn eval_picks(&self, bench: &Benchmark, seed: u64, threads: usize) -> Result<Option<Vec<Pick>>, BaselineError> {
        let eval = &bench.eval;
        let per_query = |f: &(dyn Fn(usize, &mut ChaCha8Rng) -> Result<Pick, BaselineError> + Sync)| {
            parallel_map(eval.len(), threads, |i| f(i, &mut seeding::substream(seed, "policy", EVAL_SUBSTREAM + i as u64)))
                .into_iter()
                .collect::<Result<Vec<_>, _>>()
                .map(Some)
        };
        match self {
            Strategy::NoContext => Ok(None),
            Strategy::Random => per_query(&|i, rng| {
                let s = &eval.samples[i];
                let j = retrieve_random(&bench.pool, rng, s.group)?;
                let open = bench.pool.leakage_mask(s.group).iter().filter(|&&m| !m).count();
                Ok(Pick { ctx: bench.pool.get(j).features.clone(), selected: Some(j), entropy: Some((open as f64).ln()) })
            }),
            Strategy::Control(c) => per_query(&|i, rng| {
                Ok(Pick { ctx: make_control_context(*c, &eval.samples[i].features, rng), selected: None, entropy: None })
            }),
            Strategy::Fixed(f) => Ok(Some(f.eval.clone())),
        }
    }

    fn train_agreement(&self, oracle: &[usize]) -> Option<f64> {
        match self {
            Strategy::Fixed(Fixed { train_selected: Some(sel), .. }) => {
                Some(sel.iter().zip(oracle).filter(|(a, b)| a == b).count() as f64 / sel.len().max(1) as f64)
            }
            _ => None,
        }
    }
}

fn evaluate(task: &TaskNet, bench: &Benchmark, picks: &Option<Vec<Pick>>) -> Result<synthbench::Metrics, BaselineError> {
    let outcomes: Vec<QueryOutcome> = match picks {
        None => predict(task, &bench.eval, None)?.into_iter().map(|prediction| QueryOutcome { prediction, selected: None, entropy: None }).collect(),
        Some(p) => {
            let c: Vec<&[f64]> = p.iter().map(|p| p.ctx.as_slice()).collect();
            let preds = predict(task, &bench.eval, Some(&Tensor::stack(&c)?))?;
            preds.into_iter().zip(p).map(|(prediction, p)| QueryOutcome { prediction, selected: p.selected, entropy: p.entropy }).collect()
        }
    };
    Ok(eval_metrics(&outcomes, &bench.eval, &bench.eval_oracle, &bench.pool)?)
}

fn task_step(task: &mut TaskNet, opt: &mut Momentum, x: &Tensor, ctx: Option<&Tensor>, labels: &[usize]) -> Result<f64, diffmath::DiffError> {
    let mut tape = diffmath::Tape::new();
    let v = task.bind(&mut tape, true);
    let xq = tape.constant(x.clone());
    let c = ctx.map(|c| tape.constant(c.clone()));
    let loss = task.task_loss(&mut tape, &v, xq, c, labels)?;
    let l = tape.value(loss).item();
    if !l.is_finite() {
        return Err(diffmath::DiffError::Numeric(format!("task loss is {l}")));
    }
    tape.backward(loss)?;
    let grads: Vec<Option<&Tensor>> = v.all().iter().map(|&v| tape.grad(v)).collect();
    let mut params: Vec<&mut diffmath::Parameter> = task.params_mut().iter_mut().collect();
    opt.step(&mut params, &grads);
    Ok(l)
}

fn train_strategy(method: String, strategy: Strategy, mut task: TaskNet, bench: &Benchmark, cfg: &HybridConfig, threads: usize) -> Result<TrainReport, BaselineError> {
    cfg.validate()?;
    let picks = strategy.eval_picks(bench, cfg.seed, threads)?;
    let agreement = strategy.train_agreement(&bench.train_oracle);
    let mut report = TrainReport {
        method,
        config: cfg.clone(),
        pool_version: bench.pool.version().to_string(),
        epochs: vec![EpochRecord { epoch: 0, losses: LossRecord::default(), eval: evaluate(&task, bench, &picks)?, train_oracle_agreement: agreement }],
        abort: None,
    };
    let refs: Vec<&Parameter> = task.params().iter().collect();
    let mut opt = Momentum::new(&refs, cfg.learning_rate, cfg.momentum);
    let mut shuffle = seeding::stream(cfg.seed, "shuffle");
    let mut draws = seeding::stream(cfg.seed, "policy");
    let mut order: Vec<usize> = (0..bench.train.len()).collect();
    let train_rows = rows(&bench.train);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let batches = epoch_batches(&order, cfg);
        let mut sum = 0.0;
        for (bi, ids) in batches.iter().enumerate() {
            let x = Tensor::stack(&ids.iter().map(|&i| train_rows[i]).collect::<Vec<_>>())?;
            let labels: Vec<usize> = ids.iter().map(|&i| bench.train.samples[i].label).collect();
            let ctx = strategy.train_contexts(bench, ids, &mut draws)?;
            match task_step(&mut task, &mut opt, &x, ctx.as_ref(), &labels) {
                Ok(l) => sum += l,
                Err(diffmath::DiffError::Numeric(message)) => {
                    report.abort = Some(AbortInfo { epoch, batch: bi, message });
                    return Ok(report);
                }
                Err(e) => return Err(e.into()),
            }
        }
        let l = sum / batches.len().max(1) as f64;
        report.epochs.push(EpochRecord {
            epoch,
            losses: LossRecord { l_grad: l, l_policy: 0.0, l_total: l },
            eval: evaluate(&task, bench, &picks)?,
            train_oracle_agreement: agreement,
        });
    }
    Ok(report)
}

/// Trains a fresh tasknet for `kind`. The frozen encoder and the tasknet
/// start from the same initialization the learned selector would use.
pub fn run_baseline(kind: BaselineKind, bench: &Benchmark, cfg: &HybridConfig, model: &ModelConfig, opts: &BaselineOptions, threads: usize) -> Result<TrainReport, BaselineError> {
    let models = Models::init(bench.spec.d_in(), bench.spec.classes, model, cfg.seed);
    let strategy = Strategy::build(kind, bench, &models, opts, threads)?;
    train_strategy(kind.tag().to_string(), strategy, models.task, bench, cfg, threads)
}

/// Trains the tasknet on the known most helpful candidate for every query,
/// bounding what any retriever can reach on `bench`.
pub fn run_oracle(bench: &Benchmark, cfg: &HybridConfig, model: &ModelConfig) -> Result<TrainReport, BaselineError> {
    let models = Models::init(bench.spec.d_in(), bench.spec.classes, model, cfg.seed);
    let fixed = fixed_from(oracle_picks(bench, &bench.train, &bench.train_oracle), oracle_picks(bench, &bench.eval, &bench.eval_oracle))?;
    train_strategy("oracle".into(), Strategy::Fixed(fixed), models.task, bench, cfg, 1)
}
