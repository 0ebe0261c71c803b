//! Auxiliary-set machinery: the fairness-aware MI loss, the fairness
//! adaptation loss, and the candidate dictionary.

mod dictionary;
mod mi;

pub(crate) use dictionary::read_f64s;
pub use dictionary::{
    enqueue_candidate, init_dictionary, regularized_gradient, resize_rows, select_auxiliary,
    AuxiliarySet, CandidateDictionary, KeySpec,
};
pub use mi::{
    cond_prob_aux_given_support, cond_prob_support_given_aux, fairness_adaptation_loss, mi_loss,
    AdaptationLoss, AdaptationLossConfig, GroupWeights, MiLoss, MiSide,
};
