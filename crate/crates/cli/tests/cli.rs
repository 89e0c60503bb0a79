use std::fs;
use std::path::Path;
use std::process::Command;

use baselines::BaselineKind;
use synthbench::BenchmarkKind;
use tacslab::compare::compare;
use tacslab::{execute, load_report, persist, Method, RunConfig};

fn small(method: Method, kind: BenchmarkKind, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::new(method, kind, seed);
    cfg.benchmark.train_size = 128;
    cfg.benchmark.eval_size = 64;
    cfg.train.epochs = 2;
    cfg
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tacslab"))
}

fn exit_code(cmd: &mut Command) -> i32 {
    cmd.output().expect("spawn tacslab").status.code().expect("exit code")
}

#[test]
fn config_round_trips_through_text() {
    for kind in [BenchmarkKind::Keymatch, BenchmarkKind::Crossclass] {
        let mut cfg = RunConfig::new(Method::Baseline(BaselineKind::FeatureAveraged), kind, 99);
        cfg.train.lambda = 0.25;
        cfg.train.tau = 0.37;
        cfg.benchmark.payload_scale = 1.0 / 3.0;
        cfg.top_k = 3;
        let back = RunConfig::parse(&cfg.emit()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.emit(), cfg.emit());
    }
}

#[test]
fn partial_config_keeps_defaults() {
    let cfg = RunConfig::parse("[run]\nmethod = random\n\n[train]\nepochs = 3\n").unwrap();
    let mut want = RunConfig::new(Method::Baseline(BaselineKind::Random), BenchmarkKind::Keymatch, 17);
    want.train.epochs = 3;
    assert_eq!(cfg, want);
}

#[test]
fn config_errors_name_line_and_field() {
    let e = RunConfig::parse("[run]\nseed = 3\n[train]\nwarmup = 4\n").unwrap_err();
    assert_eq!((e.line, e.field.as_str()), (4, "train.warmup"));
    let e = RunConfig::parse("[train]\ntau = 0.1\ntau = 0.2\n").unwrap_err();
    assert_eq!((e.line, e.field.as_str()), (3, "train.tau"));
    let e = RunConfig::parse("[train]\ntau = fast\n").unwrap_err();
    assert_eq!(e.line, 2);
    assert!(e.to_string().starts_with("line 2: train.tau:"), "{e}");
    assert!(RunConfig::parse("seed = 1\n").is_err());
    assert!(RunConfig::parse("[optimizer]\nlr = 1\n").is_err());
    assert!(RunConfig::parse("[run]\nmethod tacs\n").is_err());
}

#[test]
fn seed_reaches_every_consumer() {
    let cfg = RunConfig::default().with_seed(5);
    assert_eq!((cfg.seed, cfg.benchmark.seed, cfg.train.seed), (5, 5, 5));
    let parsed = RunConfig::parse("[run]\nseed = 8\n").unwrap();
    assert_eq!((parsed.benchmark.seed, parsed.train.seed), (8, 8));
}

#[test]
fn tacs_report_echoes_configuration() {
    let cfg = small(Method::Tacs, BenchmarkKind::Keymatch, 3);
    let report = execute(&cfg, 1).unwrap();
    assert_eq!(report.method, "tacs");
    assert_eq!(report.config.train.lambda, 0.5);
    assert_eq!(report.config.train.tau, 0.1);
    assert!(report.config_text.contains("lambda = 0.5\n") && report.config_text.contains("tau = 0.1\n"));
    assert_eq!(RunConfig::parse(&report.config_text).unwrap(), cfg);
    assert_eq!(report.epochs.len(), 3);
    assert_eq!(report.summary.epochs_completed, 2);
    assert!(report.summary.final_eval.oracle_agreement.is_some());
    assert!(report.abort.is_none());
}

#[test]
fn no_context_report_has_no_selection_stats() {
    let report = execute(&small(Method::Baseline(BaselineKind::NoContext), BenchmarkKind::Keymatch, 3), 1).unwrap();
    let m = &report.summary.final_eval;
    assert!(m.oracle_agreement.is_none() && m.cross_class_rate.is_none() && m.mean_entropy.is_none());
    let csv = report.epochs_csv();
    assert!(csv.lines().nth(1).unwrap().ends_with(",,,,"), "{csv}");
}

#[test]
fn run_directories_are_append_only() {
    let tmp = tempfile::tempdir().unwrap();
    let report = execute(&small(Method::Baseline(BaselineKind::Random), BenchmarkKind::Keymatch, 1), 1).unwrap();
    let a = persist(&report, tmp.path()).unwrap();
    let b = persist(&report, tmp.path()).unwrap();
    assert_ne!(a, b);
    for dir in [&a, &b] {
        for f in ["report.json", "epochs.csv", "config.txt", "snapshot.txt"] {
            assert!(dir.join(f).is_file(), "{} missing {f}", dir.display());
        }
    }
    assert_eq!(fs::read(a.join("epochs.csv")).unwrap(), fs::read(b.join("epochs.csv")).unwrap());
    assert_eq!(load_report(&a).unwrap(), report);
}

#[test]
fn compare_reports_spread_and_rejects_mixed_benchmarks() {
    let cfg = small(Method::Baseline(BaselineKind::FrozenSimilarity), BenchmarkKind::Keymatch, 4);
    let r = execute(&cfg, 1).unwrap();
    let table = compare(&[r.clone(), r.clone()]).unwrap();
    let row = table.row("frozen_sim").unwrap();
    assert_eq!(row.seeds, vec![4, 4]);
    assert_eq!(row.accuracy.1, 0.0);
    assert!(table.csv().lines().count() == 2);

    let other = execute(&small(Method::Baseline(BaselineKind::Random), BenchmarkKind::Keymatch, 5), 1).unwrap();
    let mixed = compare(&[r.clone(), other]).unwrap();
    assert_eq!(mixed.rows.len(), 2);
    assert!(mixed.delta("frozen_sim", "random").is_some());

    let cross = execute(&small(Method::Baseline(BaselineKind::Random), BenchmarkKind::Crossclass, 4), 1).unwrap();
    assert!(compare(&[r.clone(), cross]).is_err());
    assert!(compare(&[r]).is_err());
}

#[test]
fn plot_draws_both_panels() {
    let report = execute(&small(Method::Tacs, BenchmarkKind::Keymatch, 2), 1).unwrap();
    let svg = tacslab::plot::svg("tacs", &report.epochs);
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    assert!(svg.matches("<polyline").count() >= 4, "{svg}");
}

fn write(path: &Path, text: &str) {
    fs::write(path, text).unwrap();
}

#[test]
fn binary_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let bad = tmp.path().join("bad.txt");
    write(&bad, "[train]\nwarmup = 1\n");
    assert_eq!(exit_code(bin().args(["run", "--config"]).arg(&bad)), 2);
    assert_eq!(exit_code(bin().args(["run", "--method", "magic"])), 2);
    assert_eq!(exit_code(bin().arg("compare").arg(tmp.path().join("absent")).arg(tmp.path().join("gone"))), 2);
    assert_eq!(exit_code(bin().arg("plot").arg(tmp.path().join("absent"))), 2);
    assert_eq!(exit_code(bin().args(["gradcheck", "--corrupt-softmax"])), 1);
}

#[test]
fn binary_run_compare_and_export() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.txt");
    write(&cfg, "[benchmark]\ntrain_size = 128\neval_size = 64\n[train]\nepochs = 1\n");
    let runs = tmp.path().join("runs");
    for m in ["no_context", "random"] {
        assert_eq!(exit_code(bin().args(["run", "--method", m, "--config"]).arg(&cfg).arg("--out").arg(&runs)), 0);
    }
    let dirs: Vec<_> = fs::read_dir(&runs).unwrap().map(|e| e.unwrap().path()).collect();
    assert_eq!(dirs.len(), 2);
    let csv = tmp.path().join("table.csv");
    let out = bin().arg("compare").args(&dirs).arg("--out").arg(&csv).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("no_context") && text.contains("random"), "{text}");
    assert!(fs::read_to_string(&csv).unwrap().starts_with("benchmark,method,"));

    let data = tmp.path().join("data");
    assert_eq!(exit_code(bin().args(["export-dataset", "--config"]).arg(&cfg).arg("--out").arg(&data)), 0);
    for f in ["train.bin", "eval.bin", "pool.bin", "train.csv", "eval.csv", "pool.csv", "snapshot.txt"] {
        assert!(data.join(f).is_file(), "missing {f}");
    }
    let snap = fs::read_to_string(data.join("snapshot.txt")).unwrap();
    let report = load_report(&dirs[0]).unwrap();
    assert_eq!(snap.trim(), report.snapshot_hash);
}
