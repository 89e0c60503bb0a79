//! One joint update of selector and tasknet.

use diffmath::{softmax_slice, DiffError, Parameter, Tape, Tensor};
use rand_chacha::ChaCha8Rng;
use selector::{argmax, SelectorError, SelectorNet};
use serde::{Deserialize, Serialize};
use synthbench::{seeding, CandidatePool, Dataset};
use tasknet::TaskNet;

use crate::gumbel::gumbel_softmax_select;
use crate::optim::Momentum;
use crate::policy::{compute_rewards, policy_loss, sample_index, standardize_advantages};
use crate::{Ablation, AdvantageMode, HybridConfig, ModelConfig, TrainError};

#[derive(Debug, Clone, PartialEq)]
pub struct Models {
    pub selector: SelectorNet,
    pub task: TaskNet,
}

impl Models {
    /// Selector first, then tasknet, both from the `init` substream.
    pub fn init(d_in: usize, classes: usize, m: &ModelConfig, seed: u64) -> Self {
        let mut rng = seeding::stream(seed, "init");
        let selector = SelectorNet::init(d_in, m.selector_hidden, m.embed_dim, &mut rng);
        let task = TaskNet::init(d_in, m.task_hidden, classes, &mut rng);
        Models { selector, task }
    }

    pub fn params(&self) -> Vec<&Parameter> {
        self.selector.params().iter().chain(self.task.params()).collect()
    }

    pub fn params_mut(&mut self) -> Vec<&mut Parameter> {
        self.selector.params_mut().iter_mut().chain(self.task.params_mut().iter_mut()).collect()
    }

    pub fn optimizer(&self, cfg: &HybridConfig) -> Momentum {
        Momentum::new(&self.params(), cfg.learning_rate, cfg.momentum)
    }
}

/// A minibatch of queries with their leakage masks.
#[derive(Debug, Clone)]
pub struct Batch {
    pub ids: Vec<usize>,
    pub x: Tensor,
    pub labels: Vec<usize>,
    pub masks: Vec<Vec<bool>>,
}

impl Batch {
    pub fn from_split(split: &Dataset, pool: &CandidatePool, ids: &[usize]) -> Self {
        let rows: Vec<&[f64]> = ids.iter().map(|&i| split.samples[i].features.as_slice()).collect();
        let x = Tensor::stack(&rows).expect("uniform width");
        let labels = ids.iter().map(|&i| split.samples[i].label).collect();
        let masks = ids.iter().map(|&i| pool.leakage_mask(split.samples[i].group)).collect();
        Batch { ids: ids.to_vec(), x, labels, masks }
    }
}

pub fn pool_tensor(pool: &CandidatePool) -> Tensor {
    Tensor::from_vec(pool.len(), pool.d_in(), pool.matrix().to_vec()).expect("pool matrix")
}

/// Per-query record of one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionOutcome {
    pub query: usize,
    pub scores: Vec<f64>,
    pub probabilities: Vec<f64>,
    pub gumbel_index: Option<usize>,
    pub action: Option<usize>,
    pub reward: Option<f64>,
    pub advantage: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LossRecord {
    pub l_grad: f64,
    pub l_policy: f64,
    pub l_total: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub outcomes: Vec<SelectionOutcome>,
    pub losses: LossRecord,
}

/// Random streams consumed by training steps.
#[derive(Debug, Clone)]
pub struct StepRngs {
    pub gumbel: ChaCha8Rng,
    pub policy: ChaCha8Rng,
}

impl StepRngs {
    pub fn new(seed: u64) -> Self {
        StepRngs { gumbel: seeding::stream(seed, "gumbel"), policy: seeding::stream(seed, "policy") }
    }
}

fn check_finite(v: f64, what: &str, epoch: usize, batch: usize) -> Result<(), TrainError> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(TrainError::Numeric { epoch, batch, message: format!("{what} is {v}") })
    }
}

/// Builds both loss paths, backpropagates `L_grad + lambda * L_policy`
/// once, and applies a momentum step. Rewards use the pre-update tasknet.
/// Any non-finite value aborts with [`TrainError::Numeric`] naming the batch.
#[allow(clippy::too_many_arguments)]
pub fn train_step(
    models: &mut Models,
    opt: &mut Momentum,
    batch: &Batch,
    pool_x: &Tensor,
    cfg: &HybridConfig,
    rngs: &mut StepRngs,
    epoch: usize,
    batch_id: usize,
) -> Result<StepResult, TrainError> {
    let numeric = |message: String| TrainError::Numeric { epoch, batch: batch_id, message };
    step_inner(models, opt, batch, pool_x, cfg, rngs, epoch, batch_id).map_err(|e| match e {
        TrainError::Diff(DiffError::Numeric(m)) | TrainError::Selector(SelectorError::Diff(DiffError::Numeric(m))) => numeric(m),
        other => other,
    })
}

#[allow(clippy::too_many_arguments)]
fn step_inner(
    models: &mut Models,
    opt: &mut Momentum,
    batch: &Batch,
    pool_x: &Tensor,
    cfg: &HybridConfig,
    rngs: &mut StepRngs,
    epoch: usize,
    batch_id: usize,
) -> Result<StepResult, TrainError> {
    let b = batch.labels.len();
    let mut tape = Tape::new();
    let sv = models.selector.bind(&mut tape, true);
    let tv = models.task.bind(&mut tape, true);
    let xq = tape.constant(batch.x.clone());
    let xc = tape.constant(pool_x.clone());
    let scores = models.selector.score_matrix(&mut tape, &sv, xq, xc, &batch.masks)?;
    let score_rows: Vec<Vec<f64>> = (0..b).map(|r| tape.value(scores).row_slice(r).to_vec()).collect();
    let probs: Vec<Vec<f64>> = score_rows.iter().map(|s| softmax_slice(s)).collect::<Result<_, _>>()?;

    let mut outcomes: Vec<SelectionOutcome> = batch
        .ids
        .iter()
        .zip(score_rows.iter().zip(&probs))
        .map(|(&q, (s, p))| SelectionOutcome {
            query: q,
            scores: s.clone(),
            probabilities: p.clone(),
            gumbel_index: None,
            action: None,
            reward: None,
            advantage: None,
        })
        .collect();

    let mut l_grad_var = None;
    if cfg.ablation != Ablation::PolicyOnly {
        let (hard, idx) = gumbel_softmax_select(&mut tape, scores, cfg.tau, &mut rngs.gumbel)?;
        let ctx = tape.matmul(hard, xc)?;
        l_grad_var = Some(models.task.task_loss(&mut tape, &tv, xq, Some(ctx), &batch.labels)?);
        for (o, i) in outcomes.iter_mut().zip(idx) {
            o.gumbel_index = Some(i);
        }
    }

    let mut l_policy_var = None;
    if cfg.ablation != Ablation::SoftOnly {
        let actions: Vec<usize> = probs.iter().map(|p| sample_index(p, &mut rngs.policy)).collect();
        let rewards = compute_rewards(&models.task, &batch.x, &pool_x.gather_rows(&actions), &batch.labels)?;
        let advantages = match cfg.advantage {
            AdvantageMode::Standardized => standardize_advantages(&rewards)?,
            AdvantageMode::Raw => rewards.clone(),
        };
        l_policy_var = Some(policy_loss(&mut tape, scores, &actions, &advantages)?);
        for (o, ((a, r), adv)) in outcomes.iter_mut().zip(actions.iter().zip(&rewards).zip(&advantages)) {
            o.action = Some(*a);
            o.reward = Some(*r);
            o.advantage = Some(*adv);
        }
        if cfg.ablation == Ablation::PolicyOnly {
            let picks: Vec<usize> = score_rows.iter().map(|s| argmax(s)).collect();
            let ctx = tape.constant(pool_x.gather_rows(&picks));
            l_grad_var = Some(models.task.task_loss(&mut tape, &tv, xq, Some(ctx), &batch.labels)?);
        }
    }

    let l_grad = l_grad_var.map_or(0.0, |v| tape.value(v).item());
    let l_policy = l_policy_var.map_or(0.0, |v| tape.value(v).item());
    check_finite(l_grad, "L_grad", epoch, batch_id)?;
    check_finite(l_policy, "L_policy", epoch, batch_id)?;
    let total = match (l_grad_var, l_policy_var) {
        (Some(g), Some(p)) => {
            let wp = tape.scale(p, cfg.lambda);
            tape.add(g, wp)?
        }
        (Some(g), None) => g,
        (None, Some(p)) => tape.scale(p, cfg.lambda),
        (None, None) => unreachable!("at least one path is active"),
    };
    let l_total = tape.value(total).item();
    check_finite(l_total, "L_total", epoch, batch_id)?;
    tape.backward(total)?;

    let vars: Vec<_> = sv.all().into_iter().chain(tv.all()).collect();
    let grads: Vec<Option<&Tensor>> = vars.iter().map(|&v| tape.grad(v)).collect();
    if grads.iter().flatten().any(|g| !g.is_finite()) {
        return Err(TrainError::Numeric { epoch, batch: batch_id, message: "non-finite gradient".into() });
    }
    let mut params = models.params_mut();
    opt.step(&mut params, &grads);
    Ok(StepResult { outcomes, losses: LossRecord { l_grad, l_policy, l_total } })
}
