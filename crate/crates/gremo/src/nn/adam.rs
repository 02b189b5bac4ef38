//! Adam optimizer with bias-corrected first and second moments.

use super::ParamStore;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct AdamConfig {
    pub alpha: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { alpha: 0.001, beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

impl AdamConfig {
    pub fn with_alpha(alpha: f64) -> Self {
        AdamConfig { alpha, ..Default::default() }
    }
}

/// Optimizer state: step count plus first/second moment estimates shaped like
/// the parameters.
#[derive(Debug, Clone)]
pub struct AdamState {
    pub cfg: AdamConfig,
    pub t: u64,
    m: ParamStore,
    v: ParamStore,
}

impl AdamState {
    pub fn new(cfg: AdamConfig, params: &ParamStore) -> Self {
        AdamState { cfg, t: 0, m: params.zeros_like(), v: params.zeros_like() }
    }

    /// One update:
    ///   t <- t + 1
    ///   m <- b1 m + (1-b1) g     mhat = m / (1 - b1^t)
    ///   v <- b2 v + (1-b2) g^2   vhat = v / (1 - b2^t)
    ///   theta <- theta - alpha * mhat / (sqrt(vhat) + eps)
    pub fn step(&mut self, params: &mut ParamStore, grads: &ParamStore) -> Result<()> {
        if params.entries.len() != grads.entries.len()
            || params.entries.len() != self.m.entries.len()
        {
            return Err(Error::Internal(
                "optimizer state, parameters, and gradients disagree on layer count".into(),
            ));
        }
        self.t += 1;
        let AdamConfig { alpha, beta1, beta2, epsilon } = self.cfg;
        let bc1 = 1.0 - beta1.powi(self.t as i32);
        let bc2 = 1.0 - beta2.powi(self.t as i32);
        for i in 0..params.entries.len() {
            let (p, g, m, v) = match (
                params.entries[i].as_mut(),
                grads.entries[i].as_ref(),
                self.m.entries[i].as_mut(),
                self.v.entries[i].as_mut(),
            ) {
                (None, None, None, None) => continue,
                (Some(p), Some(g), Some(m), Some(v)) => (p, g, m, v),
                _ => {
                    return Err(Error::Internal(format!(
                        "layer {i}: optimizer state does not match parameters"
                    )))
                }
            };
            if p.weights.shape() != g.weights.shape() || p.bias.shape() != g.bias.shape() {
                return Err(Error::Internal(format!(
                    "layer {i}: gradient shapes do not match parameters"
                )));
            }
            for (theta, (grad, (mi, vi))) in [
                (p.weights.data_mut(), (g.weights.data(), (m.weights.data_mut(), v.weights.data_mut()))),
                (p.bias.data_mut(), (g.bias.data(), (m.bias.data_mut(), v.bias.data_mut()))),
            ] {
                for j in 0..theta.len() {
                    let gj = grad[j];
                    mi[j] = beta1 * mi[j] + (1.0 - beta1) * gj;
                    vi[j] = beta2 * vi[j] + (1.0 - beta2) * gj * gj;
                    let mhat = mi[j] / bc1;
                    let vhat = vi[j] / bc2;
                    theta[j] -= alpha * mhat / (vhat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }
}
