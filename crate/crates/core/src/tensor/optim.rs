//! Parameter update rules: Adam with L2 weight decay, and plain SGD.

use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// Applies one update to a list of parameter tensors given their gradients.
pub trait ParamUpdater {
    fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()>;
}

fn check_shapes(params: &[Tensor], grads: &[Tensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(
            "optimizer",
            format!("{} params, {} grads", params.len(), grads.len()),
        ));
    }
    for (i, (p, g)) in params.iter().zip(grads).enumerate() {
        if p.shape() != g.shape() {
            return Err(Error::shape(
                "optimizer",
                format!("param {i}: {:?} vs grad {:?}", p.shape(), g.shape()),
            ));
        }
    }
    Ok(())
}

/// Plain gradient descent, `p -= lr * g`.
#[derive(Debug, Clone, Copy)]
pub struct Sgd {
    pub lr: f64,
}

impl ParamUpdater for Sgd {
    fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads)?;
        for (p, g) in params.iter_mut().zip(grads) {
            for (pv, gv) in p.data_mut().iter_mut().zip(g.data()) {
                *pv -= self.lr * gv;
            }
        }
        Ok(())
    }
}

/// Adam state. Weight decay is added to the gradient as `wd * p` before the
/// moment updates (classic L2 form).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub step: u64,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
}

impl AdamState {
    /// Zero-initialized state for parameters with the given element counts.
    pub fn new(lr: f64, weight_decay: f64, sizes: &[usize]) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay,
            step: 0,
            first_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn for_params(lr: f64, weight_decay: f64, params: &[Tensor]) -> Self {
        let sizes: Vec<usize> = params.iter().map(Tensor::len).collect();
        Self::new(lr, weight_decay, &sizes)
    }

    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.first_moment, &self.second_moment)
    }

    /// Concatenated moments, for binary checkpointing.
    pub(crate) fn flat_moments(&self) -> (Vec<f64>, Vec<f64>) {
        (
            self.first_moment.concat(),
            self.second_moment.concat(),
        )
    }

    pub(crate) fn set_flat_moments(&mut self, m: &[f64], v: &[f64]) -> Result<()> {
        let total: usize = self.first_moment.iter().map(Vec::len).sum();
        if m.len() != total || v.len() != total {
            return Err(Error::Checkpoint(format!(
                "adam moments have {} / {} values, expected {total}",
                m.len(),
                v.len()
            )));
        }
        let mut off = 0;
        for (fm, sm) in self.first_moment.iter_mut().zip(&mut self.second_moment) {
            let n = fm.len();
            fm.copy_from_slice(&m[off..off + n]);
            sm.copy_from_slice(&v[off..off + n]);
            off += n;
        }
        Ok(())
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        check_shapes(params, grads)?;
        if params.len() != self.first_moment.len()
            || params
                .iter()
                .zip(&self.first_moment)
                .any(|(p, m)| p.len() != m.len())
        {
            return Err(Error::shape(
                "adam_step",
                "parameter shapes do not match optimizer state",
            ));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (k, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let m = &mut self.first_moment[k];
            let v = &mut self.second_moment[k];
            for (i, (pv, &gv)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gv = gv + self.weight_decay * *pv;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gv;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gv * gv;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                *pv -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

impl ParamUpdater for AdamState {
    fn apply(&mut self, params: &mut [Tensor], grads: &[Tensor]) -> Result<()> {
        self.step(params, grads)
    }
}
