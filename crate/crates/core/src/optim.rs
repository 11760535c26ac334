//! Adam with bias correction, inverse-time learning-rate decay and global
//! gradient-norm clipping.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::ShapeError;

/// `η0 / (1 + p·t)` after `t` completed optimizer steps.
pub fn lr_at_step(t: u64, eta0: f64, decay_p: f64) -> f64 {
    eta0 / (1.0 + decay_p * t as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Adam {
    /// Zero moments for parameters of the given sizes.
    pub fn new(config: AdamConfig, sizes: &[usize]) -> Self {
        Self {
            config,
            steps: 0,
            first: sizes.iter().map(|&n| vec![0.0; n]).collect(),
            second: sizes.iter().map(|&n| vec![0.0; n]).collect(),
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn first_moments(&self) -> &[Vec<f64>] {
        &self.first
    }

    pub fn second_moments(&self) -> &[Vec<f64>] {
        &self.second
    }

    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Vec<f64>], lr: f64) -> Result<(), ShapeError> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(ShapeError::Mismatch {
                op: "adam_step",
                left: vec![params.len(), grads.len()],
                right: vec![self.first.len()],
            });
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.first) {
            if p.len() != g.len() || g.len() != m.len() {
                return Err(ShapeError::Mismatch {
                    op: "adam_step",
                    left: p.shape().to_vec(),
                    right: vec![g.len()],
                });
            }
        }
        self.steps += 1;
        let AdamConfig { beta1, beta2, epsilon } = self.config;
        let c1 = 1.0 - beta1.powi(self.steps as i32);
        let c2 = 1.0 - beta2.powi(self.steps as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.first).zip(&mut self.second) {
            for (((x, &gi), mi), vi) in p.data_mut().iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = beta1 * *mi + (1.0 - beta1) * gi;
                *vi = beta2 * *vi + (1.0 - beta2) * gi * gi;
                let m_hat = *mi / c1;
                let v_hat = *vi / c2;
                *x -= lr * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

/// Scales `grads` so their joint L2 norm is at most `max_norm`; returns the norm before scaling.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm && norm.is_finite() {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}
