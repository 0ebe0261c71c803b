//! Meta-training, task adaptation, evaluation, and checkpoints.

mod checkpoint;
mod config;
mod engine;

pub use config::{KeyParams, TrainConfig, Variant};
pub use engine::{
    adapt, evaluate, fa_loss_grads, generator_loss_grads, meta_update_classifier,
    meta_update_generator, prepare_table, task_rng, train, StepLog, TrainState,
};
