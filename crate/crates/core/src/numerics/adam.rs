use serde::{Deserialize, Serialize};

use super::params::ParamStore;
use super::tensor::Tensor;
use super::Real;
use crate::error::{EmitError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Moment estimates for every parameter of one [`ParamStore`].
#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore, config: AdamConfig) -> Self {
        let zeros = || store.iter().map(|p| Tensor::zeros(p.value.shape())).collect();
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One bias-corrected Adam update using the gradients held in `store`.
    /// Weight decay enters as an extra `lr · wd · param` term.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.first.len() != store.len() {
            return Err(EmitError::InvalidConfig(format!(
                "optimizer state tracks {} parameters, store has {}",
                self.first.len(),
                store.len()
            )));
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((p, m), v) in store
            .iter_mut()
            .zip(self.first.iter_mut())
            .zip(self.second.iter_mut())
        {
            if m.shape() != p.value.shape() {
                return Err(EmitError::ShapeMismatch {
                    op: "adam",
                    left: m.shape().to_vec(),
                    right: p.value.shape().to_vec(),
                });
            }
            let g = p.grad.data();
            for (((w, &g), m), v) in p
                .value
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(m.data_mut())
                .zip(v.data_mut())
            {
                let g = g as f64;
                let mf = c.beta1 * *m as f64 + (1.0 - c.beta1) * g;
                let vf = c.beta2 * *v as f64 + (1.0 - c.beta2) * g * g;
                *m = mf as Real;
                *v = vf as Real;
                let update = (mf / bc1) / ((vf / bc2).sqrt() + c.epsilon);
                let decay = c.weight_decay * *w as f64;
                *w -= (c.lr * (update + decay)) as Real;
            }
        }
        Ok(())
    }
}
