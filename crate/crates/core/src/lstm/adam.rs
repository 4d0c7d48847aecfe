//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::LstmParams;

/// Moment-decay and stability constants. The defaults are the method's
/// published settings.
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

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: LstmParams,
    v: LstmParams,
    step: u64,
}

impl AdamState {
    pub fn new(shape: &LstmParams) -> Self {
        Self {
            m: shape.zeros_like(),
            v: shape.zeros_like(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }
}

pub(crate) fn adam_update_slice(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) {
    let bc1 = 1.0 - cfg.beta1.powi(step as i32);
    let bc2 = 1.0 - cfg.beta2.powi(step as i32);
    for idx in 0..param.len() {
        let g = grad[idx];
        m[idx] = cfg.beta1 * m[idx] + (1.0 - cfg.beta1) * g;
        v[idx] = cfg.beta2 * v[idx] + (1.0 - cfg.beta2) * g * g;
        let m_hat = m[idx] / bc1;
        let v_hat = v[idx] / bc2;
        param[idx] -= lr * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
}

/// One Adam update of every parameter tensor in place.
pub fn adam_step(
    params: &mut LstmParams,
    grads: &LstmParams,
    state: &mut AdamState,
    lr: f64,
    cfg: &AdamConfig,
) {
    state.step += 1;
    let step = state.step;
    let grad_tensors = grads.tensors();
    let param_tensors = params.tensors_mut();
    let m_tensors = state.m.tensors_mut();
    let v_tensors = state.v.tensors_mut();
    for (((param, grad), m), v) in param_tensors
        .into_iter()
        .zip(grad_tensors)
        .zip(m_tensors)
        .zip(v_tensors)
    {
        adam_update_slice(param, grad, m, v, step, lr, cfg);
    }
}
