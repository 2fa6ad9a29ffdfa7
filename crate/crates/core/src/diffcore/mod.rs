//! Minimal dense reverse-mode differentiation.
//!
//! Parameters live in a [`ParamStore`] of named, fixed-shape `f64` tensors.
//! A [`Graph`] records a forward computation as a tape over a fixed operation
//! vocabulary; [`Graph::backward`] walks the tape in reverse and returns one
//! [`GradStore`] per bound parameter store.

mod check;
mod graph;
mod ops;
mod optim;
mod params;

pub use check::{finite_diff_check, FiniteDiffReport};
pub use graph::{Bound, Gradients, Graph, Var};
pub use ops::{bce_with_logits, log_softmax, sigmoid, softmax};
pub use optim::{Optimizer, OptimizerKind};
pub use params::{GradStore, ParamStore, Tensor};
