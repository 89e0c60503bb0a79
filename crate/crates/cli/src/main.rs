use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use synthbench::{export, generate, BenchmarkKind};
use tacslab::compare::compare;
use tacslab::verify::{gradcheck_suite, run_all, VerifyOptions, GRAD_TOLERANCE};
use tacslab::{execute, load_report, persist, Method, RunConfig, RunError, DEFAULT_SEEDS};

#[derive(Parser)]
#[command(name = "tacslab", version, about = "Task-aware context selection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Config file; defaults apply to anything it leaves out.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    benchmark: Option<BenchmarkKind>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Train and evaluate one method, writing a fresh run directory.
    Run {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long, default_value = "runs")]
        out: PathBuf,
        /// Run every default seed (17, 23, 42) instead of one.
        #[arg(long)]
        sweep: bool,
    },
    /// Tabulate final metrics over run directories.
    Compare {
        dirs: Vec<PathBuf>,
        /// Also write the table as CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the gradient and estimator self-checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_softmax: bool,
    },
    /// Per-operation finite-difference report.
    Gradcheck {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, hide = true)]
        corrupt_softmax: bool,
    },
    /// SVG loss and accuracy curves for a run directory.
    Plot {
        dir: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write train, eval and pool splits in binary and CSV form.
    ExportDataset {
        #[command(flatten)]
        args: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Failures mapped to exit codes: 2 for bad input, 3 for numeric aborts.
enum Failure {
    Input(String),
    Numeric(String),
    Checks,
    Other(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, Failure> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?;
            RunConfig::parse(&text).map_err(|e| Failure::Input(format!("{}: {e}", path.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(m) = &args.method {
        cfg.method = m.parse::<Method>().map_err(Failure::Input)?;
    }
    if let Some(k) = args.benchmark {
        cfg = cfg.with_benchmark(k);
    }
    if let Some(s) = args.seed {
        cfg = cfg.with_seed(s);
    }
    Ok(cfg)
}

fn run_one(cfg: &RunConfig, out: &Path) -> Result<(), Failure> {
    let report = execute(cfg, hybrid_trainer::eval::eval_threads()).map_err(|e| match e {
        RunError::Bench(e) => Failure::Input(e.to_string()),
        other => Failure::Other(other.into()),
    })?;
    let dir = persist(&report, out).context("writing run directory")?;
    let m = &report.summary.final_eval;
    println!(
        "{} {} seed {}: accuracy {:.3}, oracle agreement {}, cross-class {} -> {}",
        report.method,
        cfg.benchmark.kind,
        cfg.seed,
        m.accuracy,
        m.oracle_agreement.map_or("-".into(), |v| format!("{v:.3}")),
        m.cross_class_rate.map_or("-".into(), |v| format!("{v:.3}")),
        dir.display()
    );
    if let Some(a) = &report.abort {
        return Err(Failure::Numeric(format!("numeric abort at epoch {}, batch {}: {}", a.epoch, a.batch, a.message)));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Run { args, out, sweep } => {
            let cfg = load_config(&args)?;
            let seeds: Vec<u64> = if sweep { DEFAULT_SEEDS.to_vec() } else { vec![cfg.seed] };
            for s in seeds {
                run_one(&cfg.clone().with_seed(s), &out)?;
            }
        }
        Command::Compare { dirs, out } => {
            let reports = dirs
                .iter()
                .map(|d| load_report(d).map_err(|e| Failure::Input(e.to_string())))
                .collect::<Result<Vec<_>, _>>()?;
            let table = compare(&reports).map_err(Failure::Input)?;
            print!("{}", table.text());
            if let Some(p) = out {
                fs::write(&p, table.csv()).with_context(|| format!("writing {}", p.display()))?;
            }
        }
        Command::Verify { seed, corrupt_softmax } => {
            let mut ok = true;
            for c in run_all(&VerifyOptions { seed, corrupt_softmax }) {
                println!("{:<28} {}  {}  ({:.1}s)", c.name, if c.passed { "PASS" } else { "FAIL" }, c.detail, c.seconds);
                ok &= c.passed;
            }
            if !ok {
                return Err(Failure::Checks);
            }
        }
        Command::Gradcheck { seed, corrupt_softmax } => {
            let mut ok = true;
            for (name, err) in gradcheck_suite(&VerifyOptions { seed, corrupt_softmax }) {
                let pass = err < GRAD_TOLERANCE;
                println!("{name:<18} {err:.3e} {}", if pass { "ok" } else { "FAIL" });
                ok &= pass;
            }
            if !ok {
                return Err(Failure::Checks);
            }
        }
        Command::Plot { dir, out } => {
            let report = load_report(&dir).map_err(|e| Failure::Input(e.to_string()))?;
            let svg = tacslab::plot::svg(&format!("{} seed {}", report.method, report.seed), &report.epochs);
            match out {
                Some(p) => fs::write(&p, svg).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{svg}"),
            }
        }
        Command::ExportDataset { args, out } => {
            let cfg = load_config(&args)?;
            let bench = generate(&cfg.benchmark).map_err(|e| Failure::Input(e.to_string()))?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let (d, c) = (bench.spec.d_in(), bench.spec.classes);
            for (name, rows) in [("train", bench.train.samples.as_slice()), ("eval", bench.eval.samples.as_slice()), ("pool", bench.pool.candidates())] {
                let bin = out.join(format!("{name}.bin"));
                let mut w = BufWriter::new(fs::File::create(&bin).with_context(|| format!("creating {}", bin.display()))?);
                export::write_binary(&mut w, d, c, rows).context("writing binary split")?;
                let csv = out.join(format!("{name}.csv"));
                let mut w = BufWriter::new(fs::File::create(&csv).with_context(|| format!("creating {}", csv.display()))?);
                export::write_csv(&mut w, d, rows).context("writing csv split")?;
            }
            fs::write(out.join("snapshot.txt"), format!("{}\n", bench.snapshot_hash())).context("writing snapshot hash")?;
            println!("exported {} train / {} eval / {} pool rows to {}", bench.train.len(), bench.eval.len(), bench.pool.len(), out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Input(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
        Err(Failure::Checks) => ExitCode::from(1),
        Err(Failure::Other(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
