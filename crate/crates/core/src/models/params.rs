use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Named, ordered parameter tensors. The order is the flatten order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamList {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

/// One entry of a checkpoint manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl ParamList {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            tensors: Vec::new(),
        }
    }

    pub fn push(&mut self, name: impl Into<String>, t: Tensor) {
        self.names.push(name.into());
        self.tensors.push(t);
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn get(&self, i: usize) -> &Tensor {
        &self.tensors[i]
    }

    /// Total number of scalar parameters.
    pub fn numel(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.tensors.iter().map(Tensor::len).collect()
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.numel());
        for t in &self.tensors {
            out.extend_from_slice(t.data());
        }
        out
    }

    /// Inverse of [`Self::flatten`] using `self` for the layout.
    pub fn unflatten(&self, flat: &[f64]) -> Result<Self> {
        if flat.len() != self.numel() {
            return Err(Error::shape(
                "unflatten_params",
                format!("{} values for {} parameters", flat.len(), self.numel()),
            ));
        }
        let mut off = 0;
        let mut tensors = Vec::with_capacity(self.tensors.len());
        for t in &self.tensors {
            let n = t.len();
            tensors.push(Tensor::from_vec(t.rows(), t.cols(), flat[off..off + n].to_vec())?);
            off += n;
        }
        Ok(Self {
            names: self.names.clone(),
            tensors,
        })
    }

    pub fn manifest(&self) -> Vec<ParamEntry> {
        let mut off = 0;
        self.names
            .iter()
            .zip(&self.tensors)
            .map(|(name, t)| {
                let e = ParamEntry {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                    offset: off,
                };
                off += t.len();
                e
            })
            .collect()
    }

    /// Checks that `manifest` describes exactly this layout.
    pub fn check_manifest(&self, manifest: &[ParamEntry]) -> Result<()> {
        if self.manifest() != manifest {
            return Err(Error::Checkpoint(
                "parameter manifest does not match the configured model".into(),
            ));
        }
        Ok(())
    }

    /// Registers every tensor as a gradient-tracked leaf.
    pub fn register(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.param(t.clone())).collect()
    }

    /// Registers every tensor as a constant.
    pub fn register_const(&self, g: &mut Graph) -> Vec<Var> {
        self.tensors.iter().map(|t| g.constant(t.clone())).collect()
    }

    /// Collects the gradients of registered leaves, in flatten order.
    pub fn grads(g: &Graph, vars: &[Var]) -> Result<Vec<Tensor>> {
        vars.iter().map(|&v| g.grad(v)).collect()
    }

    pub fn flat_grads(g: &Graph, vars: &[Var]) -> Result<Vec<f64>> {
        let mut out = Vec::new();
        for &v in vars {
            out.extend_from_slice(g.grad(v)?.data());
        }
        Ok(out)
    }
}

impl Default for ParamList {
    fn default() -> Self {
        Self::new()
    }
}

/// Kaiming-style uniform init for a `fan_in × fan_out` layer: weights in
/// `±sqrt(6 / fan_in)`, biases in `±1 / sqrt(fan_in)`.
pub(crate) fn init_linear<R: rand::Rng + ?Sized>(
    list: &mut ParamList,
    name: &str,
    fan_in: usize,
    fan_out: usize,
    rng: &mut R,
) {
    let wb = (6.0 / fan_in as f64).sqrt();
    let bb = 1.0 / (fan_in as f64).sqrt();
    list.push(format!("{name}.weight"), Tensor::uniform(fan_in, fan_out, wb, rng));
    list.push(format!("{name}.bias"), Tensor::uniform(1, fan_out, bb, rng));
}
