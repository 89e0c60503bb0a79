//! The TACS training loop.

use rand::seq::SliceRandom;
use synthbench::{seeding, Benchmark};

use crate::eval::{evaluate_selector, oracle_agreement};
use crate::{pool_tensor, train_step, AbortInfo, AdvantageMode, Batch, EpochRecord, HybridConfig, LossRecord, Models, StepRngs, TrainError, TrainReport};

/// Batch index lists for one epoch. A trailing batch of one query is dropped
/// under standardized advantages, since it cannot be standardized.
pub fn epoch_batches(order: &[usize], cfg: &HybridConfig) -> Vec<Vec<usize>> {
    order
        .chunks(cfg.batch_size)
        .filter(|c| !(cfg.advantage == AdvantageMode::Standardized && c.len() < 2))
        .map(<[usize]>::to_vec)
        .collect()
}

/// Trains `models` in place. A numeric abort stops the run and is recorded
/// in the report, which keeps every epoch completed before it.
pub fn train(models: &mut Models, bench: &Benchmark, cfg: &HybridConfig, threads: usize) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    let method = match cfg.ablation {
        crate::Ablation::Full => "tacs".to_string(),
        other => format!("tacs_{other}"),
    };
    let pool_x = pool_tensor(&bench.pool);
    let mut opt = models.optimizer(cfg);
    let mut rngs = StepRngs::new(cfg.seed);
    let mut shuffle = seeding::stream(cfg.seed, "shuffle");
    let record = |models: &Models, epoch: usize, losses: LossRecord| -> Result<EpochRecord, TrainError> {
        Ok(EpochRecord {
            epoch,
            losses,
            eval: evaluate_selector(&models.selector, &models.task, &bench.eval, &bench.eval_oracle, &bench.pool, threads)?,
            train_oracle_agreement: Some(oracle_agreement(&models.selector, &bench.train, &bench.train_oracle, &bench.pool, threads)?),
        })
    };
    let mut report = TrainReport {
        method,
        config: cfg.clone(),
        pool_version: bench.pool.version().to_string(),
        epochs: vec![record(models, 0, LossRecord::default())?],
        abort: None,
    };
    let mut order: Vec<usize> = (0..bench.train.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut shuffle);
        let batches = epoch_batches(&order, cfg);
        let mut sum = LossRecord::default();
        for (bi, ids) in batches.iter().enumerate() {
            let batch = Batch::from_split(&bench.train, &bench.pool, ids);
            match train_step(models, &mut opt, &batch, &pool_x, cfg, &mut rngs, epoch, bi) {
                Ok(step) => {
                    sum.l_grad += step.losses.l_grad;
                    sum.l_policy += step.losses.l_policy;
                    sum.l_total += step.losses.l_total;
                }
                Err(TrainError::Numeric { epoch, batch, message }) => {
                    report.abort = Some(AbortInfo { epoch, batch, message });
                    return Ok(report);
                }
                Err(e) => return Err(e),
            }
        }
        let n = batches.len().max(1) as f64;
        let mean = LossRecord { l_grad: sum.l_grad / n, l_policy: sum.l_policy / n, l_total: sum.l_total / n };
        report.epochs.push(record(models, epoch, mean)?);
    }
    Ok(report)
}
