//! Reverse-mode automatic differentiation over dense `f64` tensors.

mod check;
mod conv;
mod graph;
mod params;
mod tensor;

pub use check::{grad_check, primitive_suite, GradCheckEntry, GradCheckOptions, GradCheckReport};
pub use graph::{BackCtx, BackwardFn, Gradients, Graph, Var};
pub use params::{adam_step, AdamConfig, AdamState, Param, ParamKind, ParamStore};
pub use tensor::{Tensor, MAX_RANK};

