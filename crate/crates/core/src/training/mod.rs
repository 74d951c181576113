//! Value losses, the Adam optimizer and the multi-seed training loop.

mod losses;
mod optim;
mod trainer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derived::DerivedError;
use crate::gnn::{GnnError, GnnHyper};

pub use losses::{
    dataset_loss, loss_l0_prime, loss_l1_prime, loss_regularized, loss_supervised, root_terms, RootTerms,
};
pub use optim::{optimizer_step, AdamState};
pub use trainer::{
    batch_loss, prepare, train, Checkpoint, EpochRecord, Frames, PreparedData, Provenance, SeedRun, TrainOutcome,
    CHECKPOINT_FORMAT,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-goal state with no successors")]
    NoSuccessors,
    #[error("empty batch")]
    EmptyBatch,
    #[error("gradient coordinate {index} is NaN")]
    NanGradient { index: usize },
    #[error("parameters became non-finite after an update")]
    NonFinite,
    #[error("dataset predicates {dataset} do not match domain {domain}")]
    DatasetMismatch { dataset: String, domain: String },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error(transparent)]
    Derived(#[from] DerivedError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    Supervised,
    L0,
    L1,
}

impl std::str::FromStr for LossKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "supervised" => Ok(LossKind::Supervised),
            "l0" => Ok(LossKind::L0),
            "l1" => Ok(LossKind::L1),
            other => Err(format!("unknown loss {other}, expected l0, l1 or supervised")),
        }
    }
}

impl std::fmt::Display for LossKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            LossKind::Supervised => "supervised",
            LossKind::L0 => "l0",
            LossKind::L1 => "l1",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    pub kind: LossKind,
    /// Upper band factor of the regularizer.
    #[serde(default = "default_delta")]
    pub delta: f64,
    /// Adds `max(0, V* − V) + max(0, V − δV*)` on non-goal states.
    #[serde(default = "default_true")]
    pub regularize: bool,
}

fn default_delta() -> f64 {
    2.0
}

fn default_true() -> bool {
    true
}

impl LossConfig {
    pub fn new(kind: LossKind) -> Self {
        Self { kind, delta: 2.0, regularize: true }
    }
}

/// When the random half of the initial embeddings is redrawn during
/// training. Evaluation always uses one frame per state and `eval_seed`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RandomHalf {
    #[default]
    PerPass,
    PerEpoch,
    PerState,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub hyper: GnnHyper,
    pub loss: LossConfig,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// Root states per optimizer step.
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Wall-clock budget per seed, in seconds.
    pub time_budget_secs: f64,
    /// One independent run per entry; the entry becomes `hyper.seed`.
    pub seeds: Vec<u64>,
    /// Seed of the fixed initial embeddings used for validation.
    pub eval_seed: u64,
    pub random_half: RandomHalf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hyper: GnnHyper::default(),
            loss: LossConfig::new(LossKind::L1),
            learning_rate: 0.0002,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_size: 32,
            max_epochs: 100,
            time_budget_secs: 600.0,
            seeds: vec![0, 1, 2, 3, 4],
            eval_seed: 0,
            random_half: RandomHalf::PerPass,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        self.hyper.validate()?;
        let bad = |m: &str| Err(TrainError::Config(m.into()));
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("beta1 and beta2 must lie in [0, 1)");
        }
        if self.epsilon <= 0.0 {
            return bad("epsilon must be positive");
        }
        if self.loss.delta < 1.0 {
            return bad("loss.delta must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be positive");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.time_budget_secs.is_nan() || self.time_budget_secs < 0.0 {
            return bad("time_budget_secs must be non-negative");
        }
        Ok(())
    }
}
