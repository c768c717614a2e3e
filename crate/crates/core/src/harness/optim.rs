//! Adam and the cosine learning-rate schedule.

use std::collections::BTreeMap;

use crate::error::Result;
use crate::tensor::ParamSet;

/// Cosine annealing from `start` at step 0 to `end` at step `total`.
pub fn cosine_lr(step: usize, total: usize, start: f64, end: f64) -> f64 {
    if total == 0 {
        return start;
    }
    if step >= total {
        return end;
    }
    let w = 0.5 * (1.0 + (std::f64::consts::PI * step as f64 / total as f64).cos());
    start * w + end * (1.0 - w)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    /// First and second moments keyed by parameter name.
    pub moments: BTreeMap<String, (Vec<f64>, Vec<f64>)>,
}

impl Adam {
    pub fn new(beta1: f64, beta2: f64) -> Adam {
        Adam {
            beta1,
            beta2,
            eps: 1e-8,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    /// Updates every learnable parameter that received a gradient, then
    /// clears the gradients.
    pub fn step(&mut self, params: &ParamSet, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for p in params.learnable() {
            let Some(g) = p.grad() else { continue };
            let n = g.len();
            let (m, v) = self
                .moments
                .entry(p.name().to_string())
                .or_insert_with(|| (vec![0.0; n], vec![0.0; n]));
            let mut w = p.tensor().to_vec();
            for i in 0..n {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                w[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
            p.set_data(w)?;
        }
        params.zero_grad();
        Ok(())
    }
}
