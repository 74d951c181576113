use super::{TrainConfig, TrainError};
use crate::gnn::{GnnParams, GradientSet};

/// First and second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub t: u64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }
}

/// One bias-corrected Adam update. A NaN gradient aborts before anything
/// is modified.
pub fn optimizer_step(
    params: &mut GnnParams,
    grads: &GradientSet,
    state: &mut AdamState,
    cfg: &TrainConfig,
) -> Result<(), TrainError> {
    if let Some(index) = grads.values.iter().position(|g| g.is_nan()) {
        return Err(TrainError::NanGradient { index });
    }
    state.t += 1;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let c1 = 1.0 - b1.powf(state.t as f64);
    let c2 = 1.0 - b2.powf(state.t as f64);
    let values = params.values_mut();
    for (((p, &g), m), v) in values.iter_mut().zip(&grads.values).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= cfg.learning_rate * (*m / c1) / ((*v / c2).sqrt() + cfg.epsilon);
    }
    if !params.all_finite() {
        return Err(TrainError::NonFinite);
    }
    Ok(())
}
