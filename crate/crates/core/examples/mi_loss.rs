//! Evaluate the group-wise MI loss between a support set and an auxiliary
//! set, and show how it moves when the auxiliary embeddings are aligned
//! with the support embeddings.
//!
//! ```text
//! cargo run --example mi_loss
//! ```

use feast::auxiliary::{cond_prob_support_given_aux, mi_loss, MiSide};
use feast::tensor::{Graph, Tensor};

fn loss(s_emb: &Tensor, s_probs: &Tensor, a_emb: &Tensor, a_probs: &Tensor) -> feast::Result<f64> {
    let (s_labels, s_attrs) = ([0usize, 1, 0, 1], [0u8, 0, 1, 1]);
    let (a_labels, a_attrs) = ([0usize, 1, 0, 1], [0u8, 0, 1, 1]);
    let mut g = Graph::new();
    let se = g.param(s_emb.clone());
    let sp = g.param(s_probs.clone());
    let ae = g.param(a_emb.clone());
    let ap = g.param(a_probs.clone());
    let m = mi_loss(
        &mut g,
        MiSide { embeddings: se, probs: sp, labels: &s_labels, attrs: &s_attrs },
        MiSide { embeddings: ae, probs: ap, labels: &a_labels, attrs: &a_attrs },
    )?;
    g.backward(m.value)?;
    let grad = g.grad(se)?;
    println!("  gradient norm w.r.t. support embeddings {:.4}", grad.norm());
    Ok(g.value(m.value).item())
}

fn main() -> feast::Result<()> {
    let s_emb = Tensor::from_rows(&[[1.0, 0.0], [0.0, 1.0], [0.6, 0.8], [0.8, -0.6]])?;
    let s_probs = Tensor::from_rows(&[[0.8, 0.2], [0.3, 0.7], [0.6, 0.4], [0.1, 0.9]])?;
    let a_probs = Tensor::from_rows(&[[0.5, 0.5]; 4])?;

    let w = cond_prob_support_given_aux(&s_probs, &[0, 0, 1, 1], 1, 0)?;
    println!("weights of group-0 support rows for an auxiliary sample with y=1: {:?}", w.weights);

    let random = Tensor::from_rows(&[[0.0, 1.0], [1.0, 0.0], [-0.8, 0.6], [-0.6, -0.8]])?;
    println!("misaligned auxiliary set:");
    println!("  L_MI = {:.4}", loss(&s_emb, &s_probs, &random, &a_probs)?);
    println!("aligned auxiliary set:");
    println!("  L_MI = {:.4}", loss(&s_emb, &s_probs, &s_emb, &a_probs)?);
    Ok(())
}
