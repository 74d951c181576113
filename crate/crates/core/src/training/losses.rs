use rayon::prelude::*;

use super::{LossConfig, LossKind, TrainError};
use crate::state_space::Dataset;

pub fn loss_supervised(v: f64, vstar: u32) -> f64 {
    (v - f64::from(vstar)).abs()
}

fn min_successor(succ_values: &[f64]) -> Result<(usize, f64), TrainError> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &v) in succ_values.iter().enumerate() {
        if best.is_none_or(|(_, b)| v < b) {
            best = Some((i, v));
        }
    }
    best.ok_or(TrainError::NoSuccessors)
}

/// `|V(s) − (1 + min V(s'))|`, or `|V(s)|` on goal states.
pub fn loss_l0_prime(v: f64, succ_values: &[f64], is_goal: bool) -> Result<f64, TrainError> {
    if is_goal {
        return Ok(v.abs());
    }
    let (_, m) = min_successor(succ_values)?;
    Ok((v - (1.0 + m)).abs())
}

/// `max(0, 1 + min V(s') − V(s))`, or `|V(s)|` on goal states.
pub fn loss_l1_prime(v: f64, succ_values: &[f64], is_goal: bool) -> Result<f64, TrainError> {
    if is_goal {
        return Ok(v.abs());
    }
    let (_, m) = min_successor(succ_values)?;
    Ok((1.0 + m - v).max(0.0))
}

/// `base + max(0, V* − V) + max(0, V − δV*)`.
pub fn loss_regularized(base: f64, v: f64, vstar: u32, delta: f64) -> f64 {
    let vs = f64::from(vstar);
    base + (vs - v).max(0.0) + (v - delta * vs).max(0.0)
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Loss of one root state and its subgradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootTerms {
    pub loss: f64,
    /// `∂loss/∂V(s)`.
    pub dv: f64,
    /// Index of the first minimizing successor and `∂loss/∂V(s')` there.
    pub dsucc: Option<(usize, f64)>,
}

/// Per-root loss under `cfg`. Successor values are ignored by the
/// supervised loss and on goal states.
pub fn root_terms(cfg: &LossConfig, v: f64, vstar: u32, is_goal: bool, succ_values: &[f64]) -> Result<RootTerms, TrainError> {
    if cfg.kind == LossKind::Supervised {
        let e = v - f64::from(vstar);
        return Ok(RootTerms { loss: e.abs(), dv: sign(e), dsucc: None });
    }
    if is_goal {
        return Ok(RootTerms { loss: v.abs(), dv: sign(v), dsucc: None });
    }
    let (j, m) = min_successor(succ_values)?;
    let mut t = match cfg.kind {
        LossKind::L0 => {
            let e = v - (1.0 + m);
            RootTerms { loss: e.abs(), dv: sign(e), dsucc: Some((j, -sign(e))) }
        }
        _ => {
            let h = 1.0 + m - v;
            if h > 0.0 {
                RootTerms { loss: h, dv: -1.0, dsucc: Some((j, 1.0)) }
            } else {
                RootTerms { loss: 0.0, dv: 0.0, dsucc: None }
            }
        }
    };
    if cfg.regularize {
        let vs = f64::from(vstar);
        t.loss = loss_regularized(t.loss, v, vstar, cfg.delta);
        if vs - v > 0.0 {
            t.dv -= 1.0;
        }
        if v - cfg.delta * vs > 0.0 {
            t.dv += 1.0;
        }
    }
    Ok(t)
}

/// Weight of each root in the batch total: the mean over all roots for the
/// supervised loss, otherwise separate means over goal and non-goal roots.
pub(crate) fn root_weights(cfg: &LossConfig, goal_flags: impl Iterator<Item = bool> + Clone) -> (f64, f64) {
    let total = goal_flags.clone().count();
    let goals = goal_flags.filter(|&g| g).count();
    let inv = |n: usize| if n == 0 { 0.0 } else { 1.0 / n as f64 };
    match cfg.kind {
        LossKind::Supervised => (inv(total), inv(total)),
        _ => (inv(total - goals), inv(goals)),
    }
}

/// Total loss over every record of `ds` with `value(instance, pool index)`
/// as the value function. Values are computed once per stored state.
pub fn dataset_loss(
    ds: &Dataset,
    cfg: &LossConfig,
    value: impl Fn(usize, usize) -> Result<f64, TrainError> + Sync,
) -> Result<f64, TrainError> {
    let values: Vec<Vec<f64>> = ds
        .instances
        .iter()
        .enumerate()
        .map(|(i, inst)| (0..inst.states.len()).into_par_iter().map(|s| value(i, s)).collect())
        .collect::<Result<_, _>>()?;
    let flags = ds.instances.iter().flat_map(|i| i.records.iter().map(|r| r.is_goal));
    if flags.clone().next().is_none() {
        return Err(TrainError::EmptyBatch);
    }
    let (w_non_goal, w_goal) = root_weights(cfg, flags);
    let mut total = 0.0;
    for (inst, vals) in ds.instances.iter().zip(&values) {
        for r in &inst.records {
            let succ: Vec<f64> = r.successors.iter().map(|&s| vals[s]).collect();
            let t = root_terms(cfg, vals[r.state], r.vstar, r.is_goal, &succ)?;
            total += t.loss * if r.is_goal { w_goal } else { w_non_goal };
        }
    }
    Ok(total)
}
