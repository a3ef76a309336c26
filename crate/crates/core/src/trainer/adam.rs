use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Adam moments and learning-rate schedule `eta(t) = max(eta_init e^{-eta_decay t}, eta_min)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub eta_init: f64,
    pub eta_min: f64,
    pub eta_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            eta_init: 1.0,
            eta_min: 0.001,
            eta_decay: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eta_min > 0.0 && self.eta_min <= self.eta_init) {
            return Err(Error::Config("need 0 < eta_min <= eta_init".into()));
        }
        if self.eta_decay < 0.0 {
            return Err(Error::Config("eta_decay must be non-negative".into()));
        }
        if !((0.0..1.0).contains(&self.beta1) && (0.0..1.0).contains(&self.beta2)) {
            return Err(Error::Config("Adam betas must lie in [0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::Config("Adam epsilon must be positive".into()));
        }
        Ok(())
    }
}

pub fn learning_rate(t: usize, cfg: &AdamConfig) -> f64 {
    (cfg.eta_init * (-cfg.eta_decay * t as f64).exp()).max(cfg.eta_min)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl AdamState {
    pub fn new(n_params: usize) -> Self {
        Self {
            m: vec![0.0; n_params],
            v: vec![0.0; n_params],
        }
    }
}

/// One descent step at epoch `t >= 1`. Returns the learning rate used.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], t: usize, cfg: &AdamConfig) -> f64 {
    assert!(t >= 1, "Adam epochs start at 1");
    assert_eq!(params.len(), grads.len());
    assert_eq!(state.m.len(), grads.len());
    let eta = learning_rate(t, cfg);
    let c1 = 1.0 - cfg.beta1.powi(t as i32);
    let c2 = 1.0 - cfg.beta2.powi(t as i32);
    for (k, &g) in grads.iter().enumerate() {
        state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
        state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[k] / c1;
        let v_hat = state.v[k] / c2;
        params[k] -= eta * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    eta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn schedule_examples() {
        let cfg = AdamConfig::default();
        assert!((learning_rate(1, &cfg) - (-0.001f64).exp()).abs() < 1e-15);
        assert!((learning_rate(10_000, &cfg) - 0.001).abs() < 1e-15);
        assert_eq!(learning_rate(50_000, &cfg), 0.001);
    }

    #[test]
    fn first_step_has_magnitude_eta() {
        let cfg = AdamConfig::default();
        for g in [1e-3, -0.5, 20.0] {
            let mut state = AdamState::new(1);
            let mut p = [0.0];
            let eta = adam_step(&mut state, &mut p, &[g], 1, &cfg);
            // m_hat = g, v_hat = g^2 at t = 1
            let expected = eta * g.abs() / (g.abs() + cfg.epsilon);
            assert!((p[0].abs() - expected).abs() < 1e-15);
            assert!(p[0].signum() == -g.signum());
        }
    }

    #[test]
    fn zero_gradient_keeps_parameters() {
        let cfg = AdamConfig::default();
        let mut state = AdamState::new(3);
        let mut p = [0.5, -1.0, 2.0];
        for t in 1..=100 {
            adam_step(&mut state, &mut p, &[0.0; 3], t, &cfg);
        }
        assert_eq!(p, [0.5, -1.0, 2.0]);
    }

    #[test]
    fn validation() {
        let bad = AdamConfig {
            eta_min: 2.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(AdamConfig::default().validate().is_ok());
    }
}
