//! Method x metric tables over saved runs.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::run::RunReport;

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len().max(1) as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / n;
    (m, v.sqrt())
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodRow {
    pub method: String,
    pub seeds: Vec<u64>,
    pub accuracy: (f64, f64),
    pub oracle_agreement: Option<(f64, f64)>,
    pub cross_class_rate: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub benchmark: String,
    pub rows: Vec<MethodRow>,
    /// Broken links of `tacs > frozen_sim >= random >= no_context`.
    pub violations: Vec<String>,
}

impl Comparison {
    pub fn row(&self, method: &str) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    /// Mean accuracy difference between two methods, if both are present.
    pub fn delta(&self, a: &str, b: &str) -> Option<f64> {
        Some(self.row(a)?.accuracy.0 - self.row(b)?.accuracy.0)
    }

    pub fn text(&self) -> String {
        let pm = |v: Option<(f64, f64)>| v.map_or("-".to_string(), |(m, s)| format!("{m:.3} ± {s:.3}"));
        let mut s = format!("benchmark: {}\n{:<18} {:>6} {:>16} {:>16} {:>16}\n", self.benchmark, "method", "seeds", "accuracy", "oracle_agree", "cross_class");
        for r in &self.rows {
            let _ = writeln!(s, "{:<18} {:>6} {:>16} {:>16} {:>16}", r.method, r.seeds.len(), pm(Some(r.accuracy)), pm(r.oracle_agreement), pm(r.cross_class_rate));
        }
        if let Some(d) = self.delta("tacs", "no_context") {
            let _ = writeln!(s, "tacs - no_context accuracy: {d:+.3}");
        }
        if self.violations.is_empty() {
            s.push_str("ordering: consistent\n");
        }
        for v in &self.violations {
            let _ = writeln!(s, "ordering violation: {v}");
        }
        s
    }

    pub fn csv(&self) -> String {
        let f = |v: Option<(f64, f64)>| v.map_or(",".to_string(), |(m, s)| format!("{m:?},{s:?}"));
        let mut s = String::from("benchmark,method,seeds,accuracy_mean,accuracy_std,oracle_agreement_mean,oracle_agreement_std,cross_class_mean,cross_class_std\n");
        for r in &self.rows {
            let _ = writeln!(s, "{},{},{},{},{},{}", self.benchmark, r.method, r.seeds.len(), f(Some(r.accuracy)), f(r.oracle_agreement), f(r.cross_class_rate));
        }
        s
    }
}

fn spread(xs: Option<Vec<f64>>) -> Option<(f64, f64)> {
    xs.map(|v| mean_std(&v))
}

/// Groups final metrics by method. All runs must share one benchmark
/// definition up to the seed.
pub fn compare(reports: &[RunReport]) -> Result<Comparison, String> {
    if reports.len() < 2 {
        return Err("compare needs at least two runs".into());
    }
    let unseeded = |r: &RunReport| synthbench::BenchmarkSpec { seed: 0, ..r.config.benchmark.clone() };
    let base = unseeded(&reports[0]);
    if let Some(bad) = reports.iter().find(|r| unseeded(r) != base) {
        return Err(format!("run `{}` (seed {}) uses a different benchmark definition", bad.method, bad.seed));
    }
    let mut groups: BTreeMap<String, Vec<&RunReport>> = BTreeMap::new();
    for r in reports {
        groups.entry(r.method.clone()).or_default().push(r);
    }
    let rows: Vec<MethodRow> = groups
        .into_iter()
        .map(|(method, rs)| {
            let fin = |f: fn(&synthbench::Metrics) -> Option<f64>| rs.iter().map(|r| f(&r.summary.final_eval)).collect::<Option<Vec<_>>>();
            MethodRow {
                method,
                seeds: rs.iter().map(|r| r.seed).collect(),
                accuracy: mean_std(&rs.iter().map(|r| r.summary.final_eval.accuracy).collect::<Vec<_>>()),
                oracle_agreement: spread(fin(|m| m.oracle_agreement)),
                cross_class_rate: spread(fin(|m| m.cross_class_rate)),
            }
        })
        .collect();
    let mut c = Comparison { benchmark: base.kind.to_string(), rows, violations: Vec::new() };
    let chain = [("tacs", "frozen_sim", true), ("frozen_sim", "random", false), ("random", "no_context", false)];
    for (a, b, strict) in chain {
        if let Some(d) = c.delta(a, b) {
            if (strict && d <= 0.0) || (!strict && d < 0.0) {
                c.violations.push(format!("{a} {} {b} expected, got {d:+.3}", if strict { ">" } else { ">=" }));
            }
        }
    }
    Ok(c)
}
