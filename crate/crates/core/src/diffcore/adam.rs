use serde::{Deserialize, Serialize};

use super::tensor::ParamStore;
use crate::error::{Error, Result};

/// Adam moments and hyperparameters for one [`ParamStore`].
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<Vec<f64>>,
    pub second_moment: Vec<Vec<f64>>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new<P: ParamStore + ?Sized>(params: &P, learning_rate: f64) -> Self {
        AdamState {
            first_moment: params.zero_grads(),
            second_moment: params.zero_grads(),
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    /// One bias-corrected Adam update. `grads` follows the order of
    /// `params.tensors()`. A non-finite gradient aborts before anything is
    /// modified.
    pub fn step<P: ParamStore + ?Sized>(&mut self, params: &mut P, grads: &[Vec<f64>]) -> Result<()> {
        let mut tensors = params.tensors_mut();
        if tensors.len() != grads.len() || tensors.len() != self.first_moment.len() {
            return Err(Error::Shape(format!(
                "adam: {} parameter tensors, {} gradients, {} moments",
                tensors.len(),
                grads.len(),
                self.first_moment.len()
            )));
        }
        for ((name, t), g) in tensors.iter().zip(grads) {
            if t.len() != g.len() {
                return Err(Error::Shape(format!(
                    "adam: `{name}` has {} values, gradient {}",
                    t.len(),
                    g.len()
                )));
            }
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    name: format!("gradient of `{name}`"),
                });
            }
        }

        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((_, tensor), g), (m, v)) in tensors
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut().zip(self.second_moment.iter_mut()))
        {
            for (((p, &gi), mi), vi) in tensor
                .values_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut())
                .zip(v.iter_mut())
            {
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let denom = (*vi / bc2).sqrt() + self.eps;
                if denom > 0.0 {
                    *p -= self.learning_rate * m_hat / denom;
                }
            }
        }
        Ok(())
    }
}
