//! Reverse-mode differentiation over small dense matrices, plus a
//! finite-difference checker.

mod error;
mod gradcheck;
mod tape;
mod tensor;

pub use error::DiffError;
pub use gradcheck::{gradcheck, relative_error, GradcheckReport, ParamError, Parameter};
pub use tape::{logsumexp, row_cross_entropy, softmax_slice, Tape, Var};
pub use tensor::Tensor;

/// Step used by every gradient check in this workspace.
pub const FD_STEP: f64 = 1e-5;
