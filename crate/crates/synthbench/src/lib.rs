//! Synthetic retrieval benchmarks whose most helpful candidate is known by
//! construction, plus pool building, metrics and flat-file export.

mod crossclass;
mod data;
mod error;
pub mod export;
mod keymatch;
mod metrics;
mod pool;
pub mod seeding;
mod spec;

pub use crossclass::gen_crossclass;
pub use data::{Benchmark, CandidatePool, Dataset, LabeledSample};
pub use error::BenchError;
pub use keymatch::gen_keymatch;
pub use metrics::{entropy, eval_metrics, Metrics, QueryOutcome};
pub use pool::build_pool;
pub use spec::{BenchmarkKind, BenchmarkSpec};

/// Generates the benchmark named by `spec.kind`.
pub fn generate(spec: &BenchmarkSpec) -> Result<Benchmark, BenchError> {
    match spec.kind {
        BenchmarkKind::Keymatch => gen_keymatch(spec),
        BenchmarkKind::Crossclass => gen_crossclass(spec),
    }
}
