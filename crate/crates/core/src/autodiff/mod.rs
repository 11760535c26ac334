//! Reverse-mode automatic differentiation over small dense tensors.
//!
//! The operator set is closed: matmul, broadcasting add/mul, tanh, sigmoid,
//! softmax, concat, sum and axis reductions (including log-sum-exp), row
//! gather (embedding lookup), reshape and cross-entropy. Everything the model
//! needs is composed from these.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{grad_check, grad_check_graph, relative_error, GradCheckReport, GradMismatch, RELATIVE_FLOOR};
pub use graph::{log_sum_exp, sigmoid, Binary, Graph, Unary, Var};
pub use tensor::Tensor;
