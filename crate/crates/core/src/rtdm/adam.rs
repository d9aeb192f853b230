use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub step_size: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            step_size: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_size > 0.0) {
            return Err(Error::Config(format!("adam step_size must be positive, got {}", self.step_size)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("adam betas must lie in [0, 1)".into()));
        }
        if !(self.eps > 0.0) {
            return Err(Error::Config("adam eps must be positive".into()));
        }
        Ok(())
    }
}

/// First and second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: DMatrix<f64>,
    pub v: DMatrix<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(rows: usize, cols: usize) -> Self {
        AdamState {
            m: DMatrix::zeros(rows, cols),
            v: DMatrix::zeros(rows, cols),
            t: 0,
        }
    }
}

/// One bias-corrected ADAM descent step.
pub fn adam_step(x: &DMatrix<f64>, grad: &DMatrix<f64>, state: &mut AdamState, cfg: &AdamConfig) -> Result<DMatrix<f64>> {
    if x.shape() != grad.shape() || state.m.shape() != x.shape() {
        return Err(Error::Shape(format!(
            "adam: variables {:?}, gradient {:?}, state {:?}",
            x.shape(),
            grad.shape(),
            state.m.shape()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let mut out = x.clone();
    for i in 0..x.len() {
        let g = grad[i];
        state.m[i] = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        let m_hat = state.m[i] / c1;
        let v_hat = state.v[i] / c2;
        out[i] -= cfg.step_size * m_hat / (v_hat.sqrt() + cfg.eps);
    }
    Ok(out)
}
