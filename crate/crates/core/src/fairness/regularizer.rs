use serde::{Deserialize, Serialize};

use crate::data::Batch;
use crate::error::Result;
use crate::models::{classifier_forward, ClassifierConfig, ClassifierOutput};
use crate::tensor::{Graph, Tensor, Var};

/// Which soft fairness gap the regularizer penalizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegularizerKind {
    #[default]
    Dp,
    Eo,
}

impl std::str::FromStr for RegularizerKind {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "dp" => Ok(Self::Dp),
            "eo" => Ok(Self::Eo),
            other => Err(format!("unknown regularizer `{other}` (expected dp or eo)")),
        }
    }
}

/// A differentiable regularizer value. `degenerate` is set when a required
/// group was empty and the term fell back to zero.
#[derive(Debug, Clone, Copy)]
pub struct RegTerm {
    pub value: Var,
    pub degenerate: bool,
}

fn zero(g: &mut Graph) -> Var {
    g.constant(Tensor::scalar(0.0))
}

fn group_mean(g: &mut Graph, scores: Var, rows: &[usize]) -> Result<Var> {
    let s = g.select_rows(scores, rows)?;
    g.mean(s)
}

/// Squared gap between mean scores of the two sensitive groups.
/// `scores` is an `m × 1` column.
pub fn reg_dp(g: &mut Graph, scores: Var, attrs: &[u8]) -> Result<RegTerm> {
    let s0: Vec<usize> = (0..attrs.len()).filter(|&i| attrs[i] == 0).collect();
    let s1: Vec<usize> = (0..attrs.len()).filter(|&i| attrs[i] == 1).collect();
    if s0.is_empty() || s1.is_empty() {
        return Ok(RegTerm {
            value: zero(g),
            degenerate: true,
        });
    }
    let m0 = group_mean(g, scores, &s0)?;
    let m1 = group_mean(g, scores, &s1)?;
    let d = g.sub(m0, m1)?;
    Ok(RegTerm {
        value: g.square(d)?,
        degenerate: false,
    })
}

/// Sum over labels of squared per-label group gaps; labels lacking either
/// group are skipped.
pub fn reg_eo(g: &mut Graph, scores: Var, labels: &[usize], attrs: &[u8]) -> Result<RegTerm> {
    let cell = |a: u8, y: usize| -> Vec<usize> {
        (0..attrs.len())
            .filter(|&i| attrs[i] == a && labels[i] == y)
            .collect()
    };
    let mut total: Option<Var> = None;
    for y in 0..2 {
        let (c0, c1) = (cell(0, y), cell(1, y));
        if c0.is_empty() || c1.is_empty() {
            continue;
        }
        let m0 = group_mean(g, scores, &c0)?;
        let m1 = group_mean(g, scores, &c1)?;
        let d = g.sub(m0, m1)?;
        let sq = g.square(d)?;
        total = Some(match total {
            Some(t) => g.add(t, sq)?,
            None => sq,
        });
    }
    Ok(match total {
        Some(value) => RegTerm {
            value,
            degenerate: false,
        },
        None => RegTerm {
            value: zero(g),
            degenerate: true,
        },
    })
}

pub fn regularizer(
    g: &mut Graph,
    kind: RegularizerKind,
    scores: Var,
    labels: &[usize],
    attrs: &[u8],
) -> Result<RegTerm> {
    match kind {
        RegularizerKind::Dp => reg_dp(g, scores, attrs),
        RegularizerKind::Eo => reg_eo(g, scores, labels, attrs),
    }
}

#[derive(Debug, Clone, Copy)]
pub struct RegularizedLoss {
    /// `ce + lambda * reg`.
    pub value: Var,
    pub ce: Var,
    /// `None` when `lambda == 0` and the regularizer was not built.
    pub reg: Option<RegTerm>,
    pub output: ClassifierOutput,
}

/// Mean cross-entropy on `batch` plus `lambda` times the fairness
/// regularizer of its prediction scores.
pub fn regularized_loss(
    g: &mut Graph,
    config: &ClassifierConfig,
    vars: &[Var],
    batch: &Batch,
    lambda: f64,
    kind: RegularizerKind,
) -> Result<RegularizedLoss> {
    let x = g.constant(batch.x.clone());
    let output = classifier_forward(g, config, vars, x)?;
    let ce = g.cross_entropy(output.probs, &batch.labels)?;
    if lambda == 0.0 {
        return Ok(RegularizedLoss {
            value: ce,
            ce,
            reg: None,
            output,
        });
    }
    let scores = g.select_cols(output.probs, &[1])?;
    let reg = regularizer(g, kind, scores, &batch.labels, &batch.attrs)?;
    let weighted = g.scale(reg.value, lambda)?;
    let value = g.add(ce, weighted)?;
    Ok(RegularizedLoss {
        value,
        ce,
        reg: Some(reg),
        output,
    })
}
