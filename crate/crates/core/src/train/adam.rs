use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::{Error, Result};
use crate::model::{ModelParams, PARAM_NAMES};

/// Adam moments for every parameter tensor, in parameter order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl OptimizerState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros: Vec<Vec<f64>> = params.tensors().iter().map(|t| vec![0.0; t.numel()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn matches(&self, params: &ModelParams) -> bool {
        let sizes: Vec<usize> = params.tensors().iter().map(|t| t.numel()).collect();
        self.m.iter().map(Vec::len).eq(sizes.iter().copied()) && self.v.iter().map(Vec::len).eq(sizes.iter().copied())
    }
}

/// One bias-corrected Adam update of a flat parameter slice at step `t ≥ 1`.
#[allow(clippy::too_many_arguments)]
pub fn adam_update(theta: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64], t: u64, lr: f64, b1: f64, b2: f64, eps: f64) {
    let c1 = 1.0 - b1.powf(t as f64);
    let c2 = 1.0 - b2.powf(t as f64);
    for i in 0..theta.len() {
        m[i] = b1 * m[i] + (1.0 - b1) * g[i];
        v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
        let m_hat = m[i] / c1;
        let v_hat = v[i] / c2;
        theta[i] -= lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Applies one Adam step to every parameter. A non-finite gradient aborts
/// before anything is modified.
pub fn adam_step(params: &mut ModelParams, grads: &[Vec<f64>], state: &mut OptimizerState, cfg: &TrainConfig) -> Result<()> {
    if grads.len() != PARAM_NAMES.len() || !state.matches(params) {
        return Err(Error::Contract("optimizer state does not match the parameters".into()));
    }
    for ((name, t), g) in params.named().zip(grads) {
        if g.len() != t.numel() {
            return Err(Error::shape("adam_step", &[g.len()], &[t.numel()]));
        }
        if let Some(i) = g.iter().position(|x| !x.is_finite()) {
            return Err(Error::Numeric(format!("non-finite gradient in {name} at element {i}: {}", g[i])));
        }
    }
    state.step += 1;
    for (i, t) in params.tensors_mut().into_iter().enumerate() {
        adam_update(
            t.data_mut(),
            &grads[i],
            &mut state.m[i],
            &mut state.v[i],
            state.step,
            cfg.learning_rate,
            cfg.beta1,
            cfg.beta2,
            cfg.adam_eps,
        );
    }
    Ok(())
}

/// Scales all gradients so their joint Euclidean norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        for g in grads.iter_mut().flatten() {
            *g *= s;
        }
    }
    norm
}
