//! Reverse-mode differentiation over dense arrays, plus the Adam optimizer.
//!
//! A [`Graph`] lives for exactly one forward/backward pass. Leaves are either
//! trainable ([`Graph::param`]) or constant ([`Graph::constant`]); gradients
//! accumulate across repeated [`Graph::backward`] calls until
//! [`Graph::zero_grad`].

mod adam;
mod gradcheck;
mod graph;
mod ops;
mod real;
mod tensor;

pub use adam::AdamState;
pub use gradcheck::{grad_check, project, GradCheckReport};
pub use graph::{BackwardCtx, Graph, Op, Var};
pub use real::Real;
pub use tensor::Tensor;
