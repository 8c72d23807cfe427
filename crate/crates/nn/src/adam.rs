use serde::{Deserialize, Serialize};

use crate::params::NetworkParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-7,
        }
    }
}

/// One bias-corrected Adam update of `theta` in place; `t` counts from 1.
pub fn adam_step(
    theta: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    cfg: &AdamConfig,
) {
    debug_assert!(t >= 1);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for i in 0..theta.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// Adam moments for every tensor of a network.
#[derive(Clone, Debug)]
pub struct Adam {
    cfg: AdamConfig,
    t: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(params: &NetworkParams, cfg: AdamConfig) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().map(|t| vec![0.0; t.len()]).collect();
        Self {
            cfg,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut NetworkParams, grads: &NetworkParams) {
        self.t += 1;
        for (((p, g), m), v) in params
            .tensors_mut()
            .zip(grads.tensors())
            .zip(&mut self.m)
            .zip(&mut self.v)
        {
            adam_step(p.data_mut(), g.data(), m, v, self.t, &self.cfg);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut theta = vec![1.5, -2.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_step(&mut theta, &[0.0, 0.0], &mut m, &mut v, 1, &AdamConfig::default());
        assert_eq!(theta, vec![1.5, -2.0]);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut theta = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_step(&mut theta, &[1.0], &mut m, &mut v, 1, &AdamConfig::default());
        // m̂ = 1, v̂ = 1 → step = 0.001 / (1 + 1e-7)
        assert!((theta[0] + 0.001 / (1.0 + 1e-7)).abs() < 1e-15);
    }

    #[test]
    fn converges_on_quadratic_bowl() {
        let centre = [3.0, -1.5, 0.25];
        let mut theta = vec![0.0; 3];
        let (mut m, mut v) = (vec![0.0; 3], vec![0.0; 3]);
        let cfg = AdamConfig {
            learning_rate: 0.05,
            ..AdamConfig::default()
        };
        for t in 1..=2000 {
            let g: Vec<f64> = theta.iter().zip(&centre).map(|(x, c)| 2.0 * (x - c)).collect();
            adam_step(&mut theta, &g, &mut m, &mut v, t, &cfg);
        }
        for (x, c) in theta.iter().zip(&centre) {
            assert!((x - c).abs() < 1e-4, "{x} vs {c}");
        }
    }
}
