//! Fairness metrics (ΔDP, ΔEO) and differentiable fairness regularizers.

mod metrics;
mod regularizer;

pub use metrics::{
    delta_dp, delta_eo, EoGap, GroupedScores, MeanStd, MetricsReport, MetricsSummary, TaskMetrics,
};
pub use regularizer::{
    reg_dp, reg_eo, regularized_loss, regularizer, RegTerm, RegularizedLoss, RegularizerKind,
};
