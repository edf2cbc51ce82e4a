use serde::{Deserialize, Serialize};

use crate::diffcore::Array;
use crate::error::{Error, Result};
use crate::model::ModelParams;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// First and second moment estimates, one array per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    /// Number of updates taken so far.
    pub t: u64,
    pub m: Vec<Array>,
    pub v: Vec<Array>,
}

impl AdamState {
    pub fn new(params: &ModelParams) -> Self {
        let zeros = || params.tensors().iter().map(|t| Array::zeros(t.shape())).collect();
        Self { t: 0, m: zeros(), v: zeros() }
    }
}

/// One bias-corrected Adam update of every tensor in `params`.
pub fn adam_step(params: &mut ModelParams, grads: &[Array], state: &mut AdamState, lr: f64, cfg: &AdamConfig) -> Result<()> {
    let tensors = params.tensors_mut();
    if grads.len() != tensors.len() || state.m.len() != tensors.len() {
        return Err(Error::Shape(format!("{} gradients for {} tensors", grads.len(), tensors.len())));
    }
    if let Some((i, g)) = grads.iter().enumerate().find(|(i, g)| g.shape() != tensors[*i].shape()) {
        return Err(Error::Shape(format!("gradient {i} has shape {:?}, tensor {:?}", g.shape(), tensors[i].shape())));
    }
    state.t += 1;
    let t = state.t as f64;
    let c1 = 1.0 - cfg.beta1.powf(t);
    let c2 = 1.0 - cfg.beta2.powf(t);
    for (((p, g), m), v) in tensors.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
        for (((pv, &gv), mv), vv) in pd.iter_mut().zip(g.data()).zip(md.iter_mut()).zip(vd.iter_mut()) {
            *mv = cfg.beta1 * *mv + (1.0 - cfg.beta1) * gv;
            *vv = cfg.beta2 * *vv + (1.0 - cfg.beta2) * gv * gv;
            let m_hat = *mv / c1;
            let v_hat = *vv / c2;
            *pv -= lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
