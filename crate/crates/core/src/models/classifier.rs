use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{init_linear, ParamList};
use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Floor used when normalizing embeddings, so a dead ReLU row maps to zero.
pub const EMBED_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassifierConfig {
    pub n_features: usize,
    pub hidden: usize,
    pub embed: usize,
    pub classes: usize,
}

impl ClassifierConfig {
    /// `n_features → 40 → 40 → 2`.
    pub fn new(n_features: usize) -> Self {
        Self {
            n_features,
            hidden: 40,
            embed: 40,
            classes: 2,
        }
    }

    /// Number of scalar parameters.
    pub fn param_count(&self) -> usize {
        let Self {
            n_features: n,
            hidden: h,
            embed: e,
            classes: c,
        } = *self;
        n * h + h + h * e + e + e * c + c
    }
}

/// Parameters of the three-layer ReLU classifier.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierParams {
    pub config: ClassifierConfig,
    pub params: ParamList,
}

#[derive(Debug, Clone, Copy)]
pub struct ClassifierOutput {
    /// Row-normalized penultimate activations.
    pub embeddings: Var,
    pub logits: Var,
    /// Softmax class probabilities; column 1 is the prediction score.
    pub probs: Var,
}

impl ClassifierParams {
    pub fn init<R: Rng + ?Sized>(config: ClassifierConfig, rng: &mut R) -> Self {
        let mut params = ParamList::new();
        init_linear(&mut params, "fc1", config.n_features, config.hidden, rng);
        init_linear(&mut params, "fc2", config.hidden, config.embed, rng);
        init_linear(&mut params, "out", config.embed, config.classes, rng);
        Self { config, params }
    }

    pub fn zeros(config: ClassifierConfig) -> Self {
        let mut params = ParamList::new();
        for (name, i, o) in [
            ("fc1", config.n_features, config.hidden),
            ("fc2", config.hidden, config.embed),
            ("out", config.embed, config.classes),
        ] {
            params.push(format!("{name}.weight"), Tensor::zeros(i, o));
            params.push(format!("{name}.bias"), Tensor::zeros(1, o));
        }
        Self { config, params }
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.params.flatten()
    }

    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        Ok(Self {
            config: self.config,
            params: self.params.unflatten(flat)?,
        })
    }

    pub fn register(&self, g: &mut Graph) -> Vec<Var> {
        self.params.register(g)
    }

    /// Forward pass on a fresh constant graph, returning
    /// `(embeddings, probs)` values.
    pub fn predict(&self, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let mut g = Graph::new();
        let vars = self.params.register_const(&mut g);
        let xv = g.constant(x.clone());
        let out = classifier_forward(&mut g, &self.config, &vars, xv)?;
        Ok((g.value(out.embeddings).clone(), g.value(out.probs).clone()))
    }
}

/// Records the classifier forward pass for inputs `x` (`m × n_features`).
pub fn classifier_forward(
    g: &mut Graph,
    config: &ClassifierConfig,
    vars: &[Var],
    x: Var,
) -> Result<ClassifierOutput> {
    let cols = g.value(x).cols();
    if cols != config.n_features {
        return Err(Error::shape(
            "classifier_forward",
            format!("input has {cols} features, model expects {}", config.n_features),
        ));
    }
    if vars.len() != 6 {
        return Err(Error::shape("classifier_forward", "expected 6 parameter tensors"));
    }
    let h = g.matmul(x, vars[0])?;
    let h = g.add_bias(h, vars[1])?;
    let h = g.relu(h)?;
    let h = g.matmul(h, vars[2])?;
    let h = g.add_bias(h, vars[3])?;
    let h = g.relu(h)?;
    let embeddings = g.l2_normalize_rows_eps(h, EMBED_EPS)?;
    let logits = g.matmul(h, vars[4])?;
    let logits = g.add_bias(logits, vars[5])?;
    let probs = g.softmax_rows(logits)?;
    Ok(ClassifierOutput {
        embeddings,
        logits,
        probs,
    })
}
