//! Fairness-aware mutual information between a support set and an
//! auxiliary set, estimated within each sensitive group.

use crate::data::Batch;
use crate::error::{Error, Result};
use crate::fairness::{regularized_loss, RegularizedLoss, RegularizerKind};
use crate::models::ClassifierConfig;
use crate::tensor::{log_sum_exp, Graph, Tensor, Var};

/// Values over one set, with zeros outside the matching sensitive group.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupWeights {
    pub weights: Vec<f64>,
    /// The matching group was empty; all weights are zero.
    pub degenerate: bool,
}

/// `p(x_i | x*_j)` for every support sample `i`: the probability each
/// support sample assigns to the auxiliary label, normalized over the
/// support samples sharing the auxiliary attribute.
///
/// `support_probs` is `|S| × 2`.
pub fn cond_prob_support_given_aux(
    support_probs: &Tensor,
    support_attrs: &[u8],
    aux_label: usize,
    aux_attr: u8,
) -> Result<GroupWeights> {
    if support_probs.rows() != support_attrs.len() || aux_label >= support_probs.cols() {
        return Err(Error::shape(
            "cond_prob_support_given_aux",
            format!(
                "probs {:?}, {} attributes, label {aux_label}",
                support_probs.shape(),
                support_attrs.len()
            ),
        ));
    }
    let mut weights: Vec<f64> = (0..support_attrs.len())
        .map(|i| {
            if support_attrs[i] == aux_attr {
                support_probs.get(i, aux_label)
            } else {
                0.0
            }
        })
        .collect();
    let total: f64 = weights.iter().sum();
    if !support_attrs.contains(&aux_attr) {
        return Ok(GroupWeights {
            weights,
            degenerate: true,
        });
    }
    if total <= 0.0 {
        return Err(Error::degenerate(
            "cond_prob_support_given_aux",
            "matching support probabilities sum to zero",
        ));
    }
    weights.iter_mut().for_each(|w| *w /= total);
    Ok(GroupWeights {
        weights,
        degenerate: false,
    })
}

/// `p(x*_k | x_i)` for every auxiliary sample `k`: a softmax of
/// `2 x_i·x*_k` over the auxiliary samples with attribute `attr`.
///
/// On unit-norm embeddings this equals the softmax of `-|x_i - x*_k|^2`.
pub fn cond_prob_aux_given_support(
    embedding: &[f64],
    aux_embeddings: &Tensor,
    aux_attrs: &[u8],
    attr: u8,
) -> Result<GroupWeights> {
    if aux_embeddings.rows() != aux_attrs.len() || aux_embeddings.cols() != embedding.len() {
        return Err(Error::shape(
            "cond_prob_aux_given_support",
            format!(
                "embedding width {}, aux {:?}, {} attributes",
                embedding.len(),
                aux_embeddings.shape(),
                aux_attrs.len()
            ),
        ));
    }
    let members: Vec<usize> = (0..aux_attrs.len()).filter(|&k| aux_attrs[k] == attr).collect();
    let mut weights = vec![0.0; aux_attrs.len()];
    if members.is_empty() {
        return Ok(GroupWeights {
            weights,
            degenerate: true,
        });
    }
    let logits: Vec<f64> = members
        .iter()
        .map(|&k| 2.0 * dot(embedding, aux_embeddings.row(k)))
        .collect();
    let lse = log_sum_exp(&logits);
    for (&k, l) in members.iter().zip(&logits) {
        weights[k] = (l - lse).exp();
    }
    Ok(GroupWeights {
        weights,
        degenerate: false,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// One side of the MI estimate: classifier outputs recorded on a graph
/// plus the annotations of the samples they came from.
#[derive(Debug, Clone, Copy)]
pub struct MiSide<'a> {
    /// `m × d` unit-norm embeddings.
    pub embeddings: Var,
    /// `m × 2` class probabilities.
    pub probs: Var,
    pub labels: &'a [usize],
    pub attrs: &'a [u8],
}

#[derive(Debug, Clone, Copy)]
pub struct MiLoss {
    pub value: Var,
    /// No support/auxiliary pair shared a sensitive attribute.
    pub degenerate: bool,
}

/// Negative MI estimate between `support` and `aux`, summed over matching
/// attribute pairs and divided by `|A|`. Differentiable through both the
/// embeddings and the support probabilities.
pub fn mi_loss(g: &mut Graph, support: MiSide<'_>, aux: MiSide<'_>) -> Result<MiLoss> {
    let n_aux = aux.attrs.len();
    if n_aux == 0 || aux.labels.len() != n_aux || support.labels.len() != support.attrs.len() {
        return Err(Error::shape(
            "mi_loss",
            format!(
                "{} aux labels, {} aux attributes, {} support labels, {} support attributes",
                aux.labels.len(),
                n_aux,
                support.labels.len(),
                support.attrs.len()
            ),
        ));
    }
    let mut total: Option<Var> = None;
    for a in 0..2u8 {
        let s_rows: Vec<usize> = (0..support.attrs.len()).filter(|&i| support.attrs[i] == a).collect();
        let a_rows: Vec<usize> = (0..n_aux).filter(|&j| aux.attrs[j] == a).collect();
        if s_rows.is_empty() || a_rows.is_empty() {
            continue;
        }
        let xs = g.select_rows(support.embeddings, &s_rows)?;
        let xa = g.select_rows(aux.embeddings, &a_rows)?;
        let xat = g.transpose(xa)?;
        let sim = g.matmul(xs, xat)?;
        let sim = g.scale(sim, 2.0)?;
        let log_p = g.log_softmax_rows(sim)?;

        let mut onehot = Tensor::zeros(2, a_rows.len());
        for (c, &j) in a_rows.iter().enumerate() {
            onehot.set(aux.labels[j], c, 1.0);
        }
        let onehot = g.constant(onehot);
        let p = g.select_rows(support.probs, &s_rows)?;
        let p_label = g.matmul(p, onehot)?;
        let norm = g.sum_rows(p_label)?;
        let w = g.div_row(p_label, norm)?;

        let terms = g.mul(w, log_p)?;
        let s = g.sum(terms)?;
        total = Some(match total {
            Some(t) => g.add(t, s)?,
            None => s,
        });
    }
    Ok(match total {
        Some(t) => MiLoss {
            value: g.scale(t, -1.0 / n_aux as f64)?,
            degenerate: false,
        },
        None => MiLoss {
            value: g.constant(Tensor::scalar(0.0)),
            degenerate: true,
        },
    })
}

/// Weights and switches of the fairness adaptation loss.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptationLossConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub regularizer: RegularizerKind,
    pub use_mi: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct AdaptationLoss {
    pub value: Var,
    pub support: RegularizedLoss,
    pub aux: Option<RegularizedLoss>,
    pub mi: Option<MiLoss>,
}

/// `L_R(S) + gamma * (L_R(A) + L_MI(S, A))`. With no auxiliary set or
/// `gamma == 0` the result is `L_R(S)` itself.
pub fn fairness_adaptation_loss(
    g: &mut Graph,
    config: &ClassifierConfig,
    vars: &[Var],
    support: &Batch,
    aux: Option<&Batch>,
    cfg: &AdaptationLossConfig,
) -> Result<AdaptationLoss> {
    if !(cfg.gamma >= 0.0) {
        return Err(Error::Validation(format!("gamma must be >= 0, got {}", cfg.gamma)));
    }
    let s = regularized_loss(g, config, vars, support, cfg.lambda, cfg.regularizer)?;
    let aux = match aux {
        Some(a) if cfg.gamma != 0.0 => a,
        _ => {
            return Ok(AdaptationLoss {
                value: s.value,
                support: s,
                aux: None,
                mi: None,
            })
        }
    };
    let r = regularized_loss(g, config, vars, aux, cfg.lambda, cfg.regularizer)?;
    let (inner, mi) = if cfg.use_mi {
        let mi = mi_loss(
            g,
            MiSide {
                embeddings: s.output.embeddings,
                probs: s.output.probs,
                labels: &support.labels,
                attrs: &support.attrs,
            },
            MiSide {
                embeddings: r.output.embeddings,
                probs: r.output.probs,
                labels: &aux.labels,
                attrs: &aux.attrs,
            },
        )?;
        (g.add(r.value, mi.value)?, Some(mi))
    } else {
        (r.value, None)
    };
    let weighted = g.scale(inner, cfg.gamma)?;
    Ok(AdaptationLoss {
        value: g.add(s.value, weighted)?,
        support: s,
        aux: Some(r),
        mi,
    })
}
