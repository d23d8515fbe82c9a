use crate::nn::ParamStore;

use super::{TrainConfig, TrainError};

/// First and second moment estimates, one array per parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.value.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update from the gradients held in `store`.
/// Weight-decay parameters get `l2 · w` added to their gradient first.
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step(store: &mut ParamStore, state: &mut AdamState, cfg: &TrainConfig) -> Result<(), TrainError> {
    if state.m.len() != store.len() {
        return Err(TrainError::Config(format!(
            "optimizer state covers {} parameters, model has {}",
            state.m.len(),
            store.len()
        )));
    }
    for (p, m) in store.iter().zip(&state.m) {
        if m.len() != p.value.len() {
            return Err(TrainError::Config(format!("optimizer state shape mismatch for {}", p.name)));
        }
        if let Some(g) = p.grad.iter().find(|g| !g.is_finite()) {
            return Err(TrainError::NonFiniteGradient {
                param: p.name.clone(),
                value: *g,
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for ((p, m), v) in store.iter_mut().zip(&mut state.m).zip(&mut state.v) {
        let decay = if p.decay { cfg.l2 } else { 0.0 };
        for (((w, g), mi), vi) in p.value.data_mut().iter_mut().zip(&p.grad).zip(m).zip(v) {
            let g = g + decay * *w;
            *mi = cfg.beta1 * *mi + (1.0 - cfg.beta1) * g;
            *vi = cfg.beta2 * *vi + (1.0 - cfg.beta2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
