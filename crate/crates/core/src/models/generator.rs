//! Set encoder that regresses a support set's adaptation direction.
//!
//! One post-norm transformer encoder block (single-head self-attention and
//! a ReLU feed-forward, each with a residual connection and layer norm) is
//! applied to the support embeddings, the rows are mean-pooled, and an MLP
//! head maps the pooled vector to `out_dim` values. No positional encoding
//! is used, so the output does not depend on the order of support rows.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{init_linear, ParamList};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

const LN_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub d_model: usize,
    pub ff_hidden: usize,
    pub head_hidden: usize,
    pub out_dim: usize,
}

impl GeneratorConfig {
    /// Width 40, feed-forward 64, head 128, emitting `out_dim` values.
    pub fn new(out_dim: usize) -> Self {
        Self {
            d_model: 40,
            ff_hidden: 64,
            head_hidden: 128,
            out_dim,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorParams {
    pub config: GeneratorConfig,
    pub params: ParamList,
}

// Indices into the parameter list.
const WQ: usize = 0;
const WK: usize = 1;
const WV: usize = 2;
const WO: usize = 3;
const LN1_GAIN: usize = 4;
const LN1_BIAS: usize = 5;
const FF1_W: usize = 6;
const FF1_B: usize = 7;
const FF2_W: usize = 8;
const FF2_B: usize = 9;
const LN2_GAIN: usize = 10;
const LN2_BIAS: usize = 11;
const HEAD1_W: usize = 12;
const HEAD1_B: usize = 13;
const HEAD2_W: usize = 14;
const HEAD2_B: usize = 15;

impl GeneratorParams {
    pub fn init<R: Rng + ?Sized>(config: GeneratorConfig, rng: &mut R) -> Self {
        let d = config.d_model;
        let bound = (6.0 / d as f64).sqrt();
        let mut params = ParamList::new();
        for name in ["attn.q", "attn.k", "attn.v", "attn.o"] {
            params.push(format!("{name}.weight"), Tensor::uniform(d, d, bound, rng));
        }
        params.push("ln1.gain", Tensor::full(1, d, 1.0));
        params.push("ln1.bias", Tensor::zeros(1, d));
        init_linear(&mut params, "ff1", d, config.ff_hidden, rng);
        init_linear(&mut params, "ff2", config.ff_hidden, d, rng);
        params.push("ln2.gain", Tensor::full(1, d, 1.0));
        params.push("ln2.bias", Tensor::zeros(1, d));
        init_linear(&mut params, "head1", d, config.head_hidden, rng);
        init_linear(&mut params, "head2", config.head_hidden, config.out_dim, rng);
        Self { config, params }
    }

    pub fn register(&self, g: &mut Graph) -> Vec<Var> {
        self.params.register(g)
    }

    /// Output for `embeddings` (`|S| × d_model`) as a `1 × out_dim` tensor.
    pub fn predict(&self, embeddings: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let vars = self.params.register_const(&mut g);
        let x = g.constant(embeddings.clone());
        let out = generator_forward(&mut g, &self.config, &vars, x)?;
        Ok(g.value(out).clone())
    }
}

pub fn generator_forward(
    g: &mut Graph,
    config: &GeneratorConfig,
    vars: &[Var],
    x: Var,
) -> Result<Var> {
    let (rows, cols) = g.value(x).shape();
    if rows == 0 {
        return Err(Error::degenerate("generator_forward", "empty support set"));
    }
    if cols != config.d_model {
        return Err(Error::shape(
            "generator_forward",
            format!("embeddings have width {cols}, model width is {}", config.d_model),
        ));
    }
    if vars.len() != 16 {
        return Err(Error::shape("generator_forward", "expected 16 parameter tensors"));
    }

    let q = g.matmul(x, vars[WQ])?;
    let k = g.matmul(x, vars[WK])?;
    let v = g.matmul(x, vars[WV])?;
    let kt = g.transpose(k)?;
    let scores = g.matmul(q, kt)?;
    let scores = g.scale(scores, 1.0 / (config.d_model as f64).sqrt())?;
    let attn = g.softmax_rows(scores)?;
    let ctx = g.matmul(attn, v)?;
    let h = g.matmul(ctx, vars[WO])?;
    let r1 = g.add(x, h)?;
    let x1 = affine_norm(g, r1, vars[LN1_GAIN], vars[LN1_BIAS])?;

    let f = g.matmul(x1, vars[FF1_W])?;
    let f = g.add_bias(f, vars[FF1_B])?;
    let f = g.relu(f)?;
    let f = g.matmul(f, vars[FF2_W])?;
    let f = g.add_bias(f, vars[FF2_B])?;
    let r2 = g.add(x1, f)?;
    let x2 = affine_norm(g, r2, vars[LN2_GAIN], vars[LN2_BIAS])?;

    let pooled = g.mean_rows(x2)?;
    let z = g.matmul(pooled, vars[HEAD1_W])?;
    let z = g.add_bias(z, vars[HEAD1_B])?;
    let z = g.relu(z)?;
    let z = g.matmul(z, vars[HEAD2_W])?;
    g.add_bias(z, vars[HEAD2_B])
}

fn affine_norm(g: &mut Graph, x: Var, gain: Var, bias: Var) -> Result<Var> {
    let n = g.layer_norm_rows(x, LN_EPS)?;
    let n = g.mul_row(n, gain)?;
    g.add_bias(n, bias)
}
