//! Executing one configured run and persisting it.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use baselines::{run_baseline, BaselineOptions};
use hybrid_trainer::{train, AbortInfo, EpochRecord, Models, TrainReport};
use serde::{Deserialize, Serialize};
use synthbench::{generate, Metrics};
use thiserror::Error;

use crate::config::{Method, RunConfig};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Train(#[from] hybrid_trainer::TrainError),
    #[error(transparent)]
    Baseline(#[from] baselines::BaselineError),
    #[error(transparent)]
    Bench(#[from] synthbench::BenchError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub final_eval: Metrics,
    pub best_accuracy: f64,
    pub epochs_completed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: String,
    pub method: String,
    pub seed: u64,
    pub config: RunConfig,
    /// The config file text that replays this run.
    pub config_text: String,
    pub snapshot_hash: String,
    pub pool_version: String,
    pub epochs: Vec<EpochRecord>,
    pub summary: Summary,
    pub wall_clock_seconds: f64,
    pub abort: Option<AbortInfo>,
}

impl RunReport {
    pub fn epochs_csv(&self) -> String {
        epochs_csv(&self.epochs)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

pub fn epochs_csv(epochs: &[EpochRecord]) -> String {
    let mut s = String::from("epoch,l_grad,l_policy,l_total,accuracy,oracle_agreement,cross_class_rate,mean_entropy,train_oracle_agreement\n");
    for e in epochs {
        let _ = writeln!(
            s,
            "{},{:?},{:?},{:?},{:?},{},{},{},{}",
            e.epoch,
            e.losses.l_grad,
            e.losses.l_policy,
            e.losses.l_total,
            e.eval.accuracy,
            opt(e.eval.oracle_agreement),
            opt(e.eval.cross_class_rate),
            opt(e.eval.mean_entropy),
            opt(e.train_oracle_agreement)
        );
    }
    s
}

/// Generates the benchmark and trains the configured method.
pub fn execute(cfg: &RunConfig, threads: usize) -> Result<RunReport, RunError> {
    let started = Instant::now();
    let bench = generate(&cfg.benchmark)?;
    let report: TrainReport = match cfg.method {
        Method::Tacs => {
            let mut models = Models::init(bench.spec.d_in(), bench.spec.classes, &cfg.model, cfg.seed);
            train(&mut models, &bench, &cfg.train, threads)?
        }
        Method::Baseline(kind) => run_baseline(kind, &bench, &cfg.train, &cfg.model, &BaselineOptions { top_k: cfg.top_k }, threads)?,
    };
    let last = report.last().clone();
    let summary = Summary {
        final_eval: last.eval,
        best_accuracy: report.epochs.iter().map(|e| e.eval.accuracy).fold(f64::MIN, f64::max),
        epochs_completed: last.epoch,
    };
    Ok(RunReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        method: report.method,
        seed: cfg.seed,
        config: cfg.clone(),
        config_text: cfg.emit(),
        snapshot_hash: bench.snapshot_hash(),
        pool_version: report.pool_version,
        epochs: report.epochs,
        summary,
        wall_clock_seconds: started.elapsed().as_secs_f64(),
        abort: report.abort,
    })
}

/// Creates a fresh directory under `out`; never reuses an existing one.
pub fn create_run_dir(out: &Path, label: &str) -> Result<PathBuf, RunError> {
    fs::create_dir_all(out).map_err(io_err(out))?;
    let now = SystemTime::now().duration_since(UNIX_EPOCH).unwrap_or_default();
    let stamp = format!("{}-{:09}", now.as_secs(), now.subsec_nanos());
    for n in 0.. {
        let name = if n == 0 { format!("{label}-{stamp}") } else { format!("{label}-{stamp}-{n}") };
        let dir = out.join(name);
        match fs::create_dir(&dir) {
            Ok(()) => return Ok(dir),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => continue,
            Err(e) => return Err(RunError::Io { path: dir, source: e }),
        }
    }
    unreachable!()
}

fn write_new(path: &Path, contents: &[u8]) -> Result<(), RunError> {
    let mut f = fs::OpenOptions::new().write(true).create_new(true).open(path).map_err(io_err(path))?;
    f.write_all(contents).map_err(io_err(path))
}

/// Writes `report.json`, `epochs.csv`, `config.txt` and `snapshot.txt`.
pub fn persist(report: &RunReport, out: &Path) -> Result<PathBuf, RunError> {
    let label = format!("{}-{}-s{}", report.method, report.config.benchmark.kind, report.seed);
    let dir = create_run_dir(out, &label)?;
    let json = serde_json::to_string_pretty(report).map_err(|e| RunError::Format { path: dir.clone(), message: e.to_string() })?;
    write_new(&dir.join("report.json"), json.as_bytes())?;
    write_new(&dir.join("epochs.csv"), report.epochs_csv().as_bytes())?;
    write_new(&dir.join("config.txt"), report.config_text.as_bytes())?;
    write_new(&dir.join("snapshot.txt"), format!("{}\n", report.snapshot_hash).as_bytes())?;
    Ok(dir)
}

pub fn load_report(dir: &Path) -> Result<RunReport, RunError> {
    let path = dir.join("report.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| RunError::Format { path, message: e.to_string() })
}
