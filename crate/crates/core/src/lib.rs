//! Fair few-shot meta-learning on tabular data with auxiliary sets.
//!
//! A small classifier is meta-trained over many binary-label tasks, each
//! drawn from one subset of a dataset. Before a task is learned from its
//! few labelled samples, an auxiliary set is retrieved from a dictionary
//! of earlier support sets. The adaptation loss combines a fairness
//! regularizer on both sets with a group-wise mutual-information term
//! between them.
//!
//! Modules, bottom up:
//!
//! - [`tensor`]: dense matrices, a reverse-mode autodiff graph, Adam/SGD.
//! - [`data`]: CSV ingestion, subset splits, episode sampling, synthetic data.
//! - [`models`]: the classifier and the set-encoder that predicts an
//!   adaptation direction from support embeddings.
//! - [`fairness`]: ΔDP / ΔEO metrics and the differentiable regularizers.
//! - [`auxiliary`]: the MI loss, the adaptation loss, the candidate dictionary.
//! - [`meta`]: adaptation, meta-training, evaluation, checkpoints.
//! - [`cli`]: the `feast` binary.
//!
//! The `examples/` directory has one runnable program per capability:
//!
//! | example | shows |
//! |---|---|
//! | `autodiff_gradcheck` | graph ops checked against finite differences |
//! | `synthetic_data` | generating and writing a biased dataset |
//! | `episode_sampling` | splits and N-way K-shot episodes |
//! | `fairness_metrics` | ΔDP, ΔEO and the partial-task policy |
//! | `mi_loss` | the group-wise MI loss and its weights |
//! | `dictionary_selection` | enqueue, eviction and nearest-key retrieval |
//! | `generator` | fitting the direction generator on one task |
//! | `train_and_evaluate` | meta-training and meta-testing one variant |
//! | `ablation_sweep` | all variants on the same meta-test tasks |
//! | `checkpoint_resume` | bit-exact resume from a checkpoint |

pub mod auxiliary;
pub mod cli;
pub mod data;
pub mod error;
pub mod fairness;
pub mod meta;
pub mod models;
pub mod tensor;

pub use error::{Error, Result};
