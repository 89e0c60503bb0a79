//! Comparison retrieval strategies and context controls, all sharing the
//! tasknet training loop.

mod error;
mod kind;
mod retrieve;
mod run;

pub use error::BaselineError;
pub use kind::{BaselineKind, ControlKind};
pub use retrieve::{
    build_feature_averaged_context, feature_average, make_control_context, retrieve_frozen_similarity, retrieve_random, FrozenRetriever, DEFAULT_TOP_K,
    NOISE_SIGMA,
};
pub use run::{run_baseline, run_oracle, BaselineOptions};
