//! Bias-corrected adaptive-moment optimizer for the controller parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::{ControllerWeights, TrainConfig};

/// First/second moment estimates plus the step counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl AdamState {
    pub fn new(param_count: usize) -> Self {
        AdamState { m: vec![0.0; param_count], v: vec![0.0; param_count], t: 0 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// One update on a raw parameter slice:
/// `m = b1*m + (1-b1)*g; v = b2*v + (1-b2)*g^2;`
/// `theta -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)`.
pub fn adam_update(
    params: &mut [f64],
    grads: &[f64],
    state: &mut AdamState,
    lr: f64,
    beta1: f64,
    beta2: f64,
    epsilon: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(Error::usage(format!(
            "adam: mismatched sizes (params {}, grads {}, state {})",
            params.len(),
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let bc1 = 1.0 - beta1.powi(state.t as i32);
    let bc2 = 1.0 - beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * g;
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (v_hat.sqrt() + epsilon);
        if !params[i].is_finite() {
            return Err(Error::numeric(format!("adam: parameter {i} overflowed")));
        }
    }
    Ok(())
}

/// Apply one optimizer step to the controller weights using the training
/// configuration's rate and moment coefficients.
pub fn adam_step(
    weights: &mut ControllerWeights,
    grads: &[f64],
    state: &mut AdamState,
    config: &TrainConfig,
) -> Result<()> {
    adam_update(
        weights.params_mut(),
        grads,
        state,
        config.lr,
        config.beta1,
        config.beta2,
        config.epsilon,
    )
}
