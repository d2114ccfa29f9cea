//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Graph`] records every operation applied to its [`Var`]s; calling
//! [`Graph::backward`] on a scalar walks the tape in reverse and collects
//! gradients for the leaves created with `requires_grad`.

pub mod gradcheck;
mod graph;
pub(crate) mod kernels;

pub(crate) use graph::sigmoid;
pub use graph::{BackwardCtx, Gradients, Graph, LinearOp, Var};
