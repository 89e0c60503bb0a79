//! Flat `key = value` run configuration with one section per module.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use baselines::BaselineKind;
use hybrid_trainer::{HybridConfig, ModelConfig};
use serde::{Deserialize, Serialize};
use synthbench::{BenchmarkKind, BenchmarkSpec};
use thiserror::Error;

/// Seeds used for multi-seed sweeps.
pub const DEFAULT_SEEDS: [u64; 3] = [17, 23, 42];

#[derive(Debug, Clone, PartialEq, Error)]
#[error("line {line}: {field}: {message}")]
pub struct ConfigError {
    pub line: usize,
    pub field: String,
    pub message: String,
}

/// The learned selector or one of the baselines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    Tacs,
    Baseline(BaselineKind),
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Tacs => f.write_str("tacs"),
            Method::Baseline(k) => f.write_str(k.tag()),
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "tacs" {
            return Ok(Method::Tacs);
        }
        s.parse().map(Method::Baseline).map_err(|_| {
            let tags: Vec<&str> = std::iter::once("tacs").chain(BaselineKind::ALL.iter().map(|k| k.tag())).collect();
            format!("unknown method `{s}` (expected one of {})", tags.join(", "))
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub method: Method,
    /// Drives every random stream: dataset, pool, init, gumbel, policy, shuffle.
    pub seed: u64,
    pub benchmark: BenchmarkSpec,
    pub train: HybridConfig,
    pub model: ModelConfig,
    pub top_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::new(Method::Tacs, BenchmarkKind::Keymatch, DEFAULT_SEEDS[0])
    }
}

impl RunConfig {
    pub fn new(method: Method, kind: BenchmarkKind, seed: u64) -> Self {
        RunConfig {
            method,
            seed,
            benchmark: BenchmarkSpec::default_for(kind, seed),
            train: HybridConfig { seed, ..HybridConfig::default() },
            model: ModelConfig::default(),
            top_k: baselines::DEFAULT_TOP_K,
        }
    }

    /// Sets the run seed everywhere it is consumed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.benchmark.seed = seed;
        self.train.seed = seed;
        self
    }

    /// Switches benchmark kind, resetting its parameters to that kind's defaults.
    pub fn with_benchmark(mut self, kind: BenchmarkKind) -> Self {
        if kind != self.benchmark.kind {
            self.benchmark = BenchmarkSpec::default_for(kind, self.seed);
        }
        self
    }

    pub fn emit(&self) -> String {
        let b = &self.benchmark;
        let t = &self.train;
        let m = &self.model;
        let mut s = String::new();
        let _ = writeln!(s, "[run]\nmethod = {}\nseed = {}\n", self.method, self.seed);
        let _ = writeln!(
            s,
            "[benchmark]\nkind = {}\nclasses = {}\nkeys = {}\ntrain_key_dims = {}\neval_key_dims = {}\ndistractors = {}\neval_distractors = {}\n\
             payload_dims = {}\nkey_scale = {:?}\npayload_scale = {:?}\ndistractor_strength = {:?}\nhelpful_distractor_rate = {:?}\n\
             pool_fraction = {:?}\ntrain_size = {}\neval_size = {}\n",
            b.kind,
            b.classes,
            b.keys,
            b.train_key_dims,
            b.eval_key_dims,
            b.distractors,
            b.eval_distractors,
            b.payload_dims,
            b.key_scale,
            b.payload_scale,
            b.distractor_strength,
            b.helpful_distractor_rate,
            b.pool_fraction,
            b.train_size,
            b.eval_size
        );
        let _ = writeln!(
            s,
            "[train]\ntau = {:?}\nlambda = {:?}\nepochs = {}\nbatch_size = {}\nlearning_rate = {:?}\nmomentum = {:?}\nadvantage = {}\nablation = {}\n",
            t.tau, t.lambda, t.epochs, t.batch_size, t.learning_rate, t.momentum, t.advantage, t.ablation
        );
        let _ = writeln!(s, "[model]\nselector_hidden = {}\nembed_dim = {}\ntask_hidden = {}\n", m.selector_hidden, m.embed_dim, m.task_hidden);
        let _ = writeln!(s, "[baseline]\ntop_k = {}", self.top_k);
        s
    }

    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let entries = entries(text)?;
        // The benchmark kind picks the defaults other benchmark keys override.
        let kind = match entries.iter().find(|e| e.section == "benchmark" && e.key == "kind") {
            Some(e) => parse_value::<BenchmarkKind>(e)?,
            None => BenchmarkKind::Keymatch,
        };
        let seed = match entries.iter().find(|e| e.section == "run" && e.key == "seed") {
            Some(e) => parse_value::<u64>(e)?,
            None => DEFAULT_SEEDS[0],
        };
        let mut c = RunConfig::new(Method::Tacs, kind, seed);
        for e in &entries {
            c.apply(e)?;
        }
        let fail = |field: &str, message: String| ConfigError { line: 0, field: field.into(), message };
        c.benchmark.validate().map_err(|e| fail("benchmark", e.to_string()))?;
        c.train.validate().map_err(|e| fail("train", e.to_string()))?;
        if c.top_k == 0 {
            return Err(fail("baseline.top_k", "must be positive".into()));
        }
        Ok(c)
    }

    fn apply(&mut self, e: &Entry) -> Result<(), ConfigError> {
        let (b, t, m) = (&mut self.benchmark, &mut self.train, &mut self.model);
        match (e.section.as_str(), e.key.as_str()) {
            ("run", "method") => self.method = parse_value(e)?,
            ("run", "seed") | ("benchmark", "kind") => {}
            ("benchmark", "classes") => b.classes = parse_value(e)?,
            ("benchmark", "keys") => b.keys = parse_value(e)?,
            ("benchmark", "train_key_dims") => b.train_key_dims = parse_value(e)?,
            ("benchmark", "eval_key_dims") => b.eval_key_dims = parse_value(e)?,
            ("benchmark", "distractors") => b.distractors = parse_value(e)?,
            ("benchmark", "eval_distractors") => b.eval_distractors = parse_value(e)?,
            ("benchmark", "payload_dims") => b.payload_dims = parse_value(e)?,
            ("benchmark", "key_scale") => b.key_scale = parse_value(e)?,
            ("benchmark", "payload_scale") => b.payload_scale = parse_value(e)?,
            ("benchmark", "distractor_strength") => b.distractor_strength = parse_value(e)?,
            ("benchmark", "helpful_distractor_rate") => b.helpful_distractor_rate = parse_value(e)?,
            ("benchmark", "pool_fraction") => b.pool_fraction = parse_value(e)?,
            ("benchmark", "train_size") => b.train_size = parse_value(e)?,
            ("benchmark", "eval_size") => b.eval_size = parse_value(e)?,
            ("train", "tau") => t.tau = parse_value(e)?,
            ("train", "lambda") => t.lambda = parse_value(e)?,
            ("train", "epochs") => t.epochs = parse_value(e)?,
            ("train", "batch_size") => t.batch_size = parse_value(e)?,
            ("train", "learning_rate") => t.learning_rate = parse_value(e)?,
            ("train", "momentum") => t.momentum = parse_value(e)?,
            ("train", "advantage") => t.advantage = parse_value(e)?,
            ("train", "ablation") => t.ablation = parse_value(e)?,
            ("model", "selector_hidden") => m.selector_hidden = parse_value(e)?,
            ("model", "embed_dim") => m.embed_dim = parse_value(e)?,
            ("model", "task_hidden") => m.task_hidden = parse_value(e)?,
            ("baseline", "top_k") => self.top_k = parse_value(e)?,
            _ => return Err(e.error("unknown key".into())),
        }
        Ok(())
    }
}

struct Entry {
    line: usize,
    section: String,
    key: String,
    value: String,
}

impl Entry {
    fn error(&self, message: String) -> ConfigError {
        ConfigError { line: self.line, field: format!("{}.{}", self.section, self.key), message }
    }
}

fn parse_value<T: FromStr>(e: &Entry) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    e.value.parse().map_err(|err: T::Err| e.error(format!("bad value `{}`: {err}", e.value)))
}

const SECTIONS: [&str; 5] = ["run", "benchmark", "train", "model", "baseline"];

fn entries(text: &str) -> Result<Vec<Entry>, ConfigError> {
    let mut out: Vec<Entry> = Vec::new();
    let mut section: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(name) = l.strip_prefix('[').and_then(|r| r.strip_suffix(']')) {
            let name = name.trim();
            if !SECTIONS.contains(&name) {
                return Err(ConfigError { line, field: name.into(), message: "unknown section".into() });
            }
            section = Some(name.to_string());
            continue;
        }
        let Some((k, v)) = l.split_once('=') else {
            return Err(ConfigError { line, field: l.into(), message: "expected `key = value`".into() });
        };
        let Some(sec) = section.clone() else {
            return Err(ConfigError { line, field: k.trim().into(), message: "key outside of a section".into() });
        };
        let (key, value) = (k.trim().to_string(), v.trim().to_string());
        if out.iter().any(|e| e.section == sec && e.key == key) {
            return Err(ConfigError { line, field: format!("{sec}.{key}"), message: "duplicate key".into() });
        }
        out.push(Entry { line, section: sec, key, value });
    }
    Ok(out)
}
