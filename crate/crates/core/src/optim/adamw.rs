//! AdamW: Adam moments with bias correction, weight decay applied directly to
//! the parameters instead of through the gradient.

use super::TrainConfig;
use crate::error::{Error, Result};

/// One parameter tensor with its gradient.
pub struct Param<'a> {
    pub values: &'a mut [f64],
    pub grads: &'a [f64],
    /// Whether decoupled weight decay applies (weights and BN gamma only).
    pub decay: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(shapes: &[usize]) -> Self {
        OptimizerState {
            step: 0,
            m: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            v: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }
}

/// Applies one AdamW update to every tensor in `params`.
///
/// All gradients are checked before anything is touched, so a non-finite
/// gradient leaves parameters and state unchanged.
pub fn adamw_step(
    params: &mut [Param<'_>],
    state: &mut OptimizerState,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<()> {
    if state.m.len() != params.len() {
        return Err(Error::Shape(format!(
            "optimizer tracks {} tensors, got {}",
            state.m.len(),
            params.len()
        )));
    }
    for (t, p) in params.iter().enumerate() {
        if p.values.len() != p.grads.len() || p.values.len() != state.m[t].len() {
            return Err(Error::Shape(format!("tensor {t}: parameter/gradient/state sizes differ")));
        }
        if let Some(i) = p.grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!(
                "gradient of tensor {t} at index {i} is {} (step {})",
                p.grads[i],
                state.step + 1
            )));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (idx, p) in params.iter_mut().enumerate() {
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let decay = if p.decay { lr * cfg.weight_decay } else { 0.0 };
        for i in 0..p.values.len() {
            let g = p.grads[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            let theta = p.values[i];
            p.values[i] = theta - lr * m_hat / (v_hat.sqrt() + cfg.eps) - decay * theta;
        }
    }
    Ok(())
}
