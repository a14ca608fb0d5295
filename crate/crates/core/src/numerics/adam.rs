//! Bias-corrected Adam parameter updates.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::tensor::Tensor;

/// Optimizer hyperparameters, defaulting to the conventional published
/// values.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
}

/// Per-parameter moment buffers keyed by parameter name, plus the step
/// counter used for bias correction.
pub struct AdamState {
    pub config: AdamConfig,
    step: u64,
    moments: BTreeMap<String, Moments>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            moments: BTreeMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One update over `params`, consuming the matching gradients by name.
    /// Parameters without a gradient entry are treated as zero-gradient.
    /// The step counter increments before the bias correction.
    pub fn step(&mut self, params: &mut [(&str, &mut Tensor)], grads: &BTreeMap<String, Vec<f64>>) {
        self.step += 1;
        let t = self.step as i32;
        let c = self.config;
        let bias1 = 1.0 - c.beta1.powi(t);
        let bias2 = 1.0 - c.beta2.powi(t);
        for (name, tensor) in params.iter_mut() {
            let zero: Vec<f64>;
            let grad: &[f64] = match grads.get(*name) {
                Some(g) => {
                    assert_eq!(
                        g.len(),
                        tensor.numel(),
                        "shape mismatch in adam step for {}: grad {} vs param {}",
                        name,
                        g.len(),
                        tensor.numel()
                    );
                    g
                }
                None => {
                    zero = vec![0.0; tensor.numel()];
                    &zero
                }
            };
            let m = self
                .moments
                .entry(name.to_string())
                .or_insert_with(|| Moments {
                    first: vec![0.0; grad.len()],
                    second: vec![0.0; grad.len()],
                });
            assert_eq!(
                m.first.len(),
                tensor.numel(),
                "shape mismatch in adam state for {}",
                name
            );
            let data = tensor.data_mut();
            for i in 0..grad.len() {
                m.first[i] = c.beta1 * m.first[i] + (1.0 - c.beta1) * grad[i];
                m.second[i] = c.beta2 * m.second[i] + (1.0 - c.beta2) * grad[i] * grad[i];
                let m_hat = m.first[i] / bias1;
                let v_hat = m.second[i] / bias2;
                data[i] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
    }
}
