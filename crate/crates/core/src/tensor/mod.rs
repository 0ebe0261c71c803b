//! Dense 2-D tensors, reverse-mode autodiff and optimizers.

mod graph;
mod matrix;
mod optim;

pub use graph::{log_sum_exp, Graph, Var, LOG_CLAMP};
pub use matrix::Tensor;
pub use optim::{AdamState, ParamUpdater, Sgd};

