use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::losses::root_weights;
use super::{
    dataset_loss, optimizer_step, root_terms, AdamState, LossConfig, LossKind, RandomHalf, TrainConfig, TrainError,
};
use crate::derived::{AugmentationSpec, Augmenter};
use crate::gnn::{
    backward_into, forward, frame_for, init_params, mix_seed, EmbeddingMode, GnnParams, GradientSet, SavedModel,
};
use crate::grounding::State;
use crate::pddl::{Domain, Origin};
use crate::state_space::Dataset;

pub const CHECKPOINT_FORMAT: &str = "genplan-checkpoint/1";

/// A dataset whose stored states have been augmented for the network.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub dataset: Dataset,
    pub augmenter: Augmenter,
    pub augmentation: AugmentationSpec,
    pub domain_name: String,
    /// Augmented states, parallel to each instance's state pool.
    pub states: Vec<Vec<State>>,
}

impl PreparedData {
    fn num_objects(&self, instance: usize) -> usize {
        self.dataset.instances[instance].objects.len()
    }

    /// Every `(instance, record)` pair.
    pub fn roots(&self) -> Vec<(usize, usize)> {
        self.dataset
            .instances
            .iter()
            .enumerate()
            .flat_map(|(i, inst)| (0..inst.records.len()).map(move |r| (i, r)))
            .collect()
    }
}

fn signature_text(sig: &[(String, usize)]) -> String {
    sig.iter().map(|(n, a)| format!("{n}/{a}")).collect::<Vec<_>>().join(" ")
}

/// Checks the dataset against `domain` and augments every stored state.
pub fn prepare(dataset: Dataset, domain: &Domain, spec: &AugmentationSpec) -> Result<PreparedData, TrainError> {
    let base: Vec<(String, usize)> = domain
        .predicates
        .iter()
        .filter(|p| p.origin == Origin::Base)
        .map(|p| (p.name.clone(), p.arity))
        .collect();
    if dataset.signature != base {
        return Err(TrainError::DatasetMismatch {
            dataset: signature_text(&dataset.signature),
            domain: signature_text(&base),
        });
    }
    let augmenter = Augmenter::new(domain, spec)?;
    let states = dataset
        .instances
        .iter()
        .map(|inst| inst.states.par_iter().map(|s| augmenter.augment(s, &inst.goal)).collect())
        .collect();
    Ok(PreparedData { dataset, augmenter, augmentation: spec.clone(), domain_name: domain.name.clone(), states })
}

/// Source of the random half of the initial embeddings in one batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Frames {
    /// Fresh draws for every forward pass, from a generator seeded by this
    /// value and the root's position, so results do not depend on
    /// scheduling.
    Fresh(u64),
    /// One frame per state, keyed by this seed and the state.
    Fixed(u64),
}

/// Loss and gradient over the roots `(instance, record)` of one batch.
pub fn batch_loss(
    params: &GnnParams,
    data: &PreparedData,
    roots: &[(usize, usize)],
    cfg: &LossConfig,
    frames: Frames,
) -> Result<(f64, GradientSet), TrainError> {
    if roots.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let record = |&(i, r): &(usize, usize)| &data.dataset.instances[i].records[r];
    let (w_non_goal, w_goal) = root_weights(cfg, roots.iter().map(|x| record(x).is_goal));
    let k = params.hyper().k;
    let parts: Vec<Result<(f64, Option<GradientSet>), TrainError>> = roots
        .par_iter()
        .enumerate()
        .map(|(pos, root)| {
            let rec = record(root);
            let (i, _) = *root;
            let n = data.num_objects(i);
            let weight = if rec.is_goal { w_goal } else { w_non_goal };
            let (mode, rng_seed) = match frames {
                Frames::Fresh(seed) => (EmbeddingMode::Stochastic, mix_seed(&[seed, pos as u64])),
                Frames::Fixed(seed) => (EmbeddingMode::FixedSeed(seed), 0),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
            let state = &data.states[i][rec.state];
            let tape = forward(params, state, &frame_for(state, n, k, mode, &mut rng))?;
            let needs_successors = cfg.kind != LossKind::Supervised && !rec.is_goal;
            let succ_tapes = if needs_successors {
                rec.successors
                    .iter()
                    .map(|&s| {
                        let st = &data.states[i][s];
                        forward(params, st, &frame_for(st, n, k, mode, &mut rng))
                    })
                    .collect::<Result<Vec<_>, _>>()?
            } else {
                Vec::new()
            };
            let succ_values: Vec<f64> = succ_tapes.iter().map(|t| t.value()).collect();
            let terms = root_terms(cfg, tape.value(), rec.vstar, rec.is_goal, &succ_values)?;
            let dsucc = terms.dsucc.filter(|&(_, d)| d != 0.0);
            if terms.dv == 0.0 && dsucc.is_none() {
                return Ok((weight * terms.loss, None));
            }
            let mut g = GradientSet::zeros(params);
            backward_into(&tape, params, weight * terms.dv, &mut g)?;
            if let Some((j, d)) = dsucc {
                backward_into(&succ_tapes[j], params, weight * d, &mut g)?;
            }
            Ok((weight * terms.loss, Some(g)))
        })
        .collect();
    let mut total = 0.0;
    let mut grad = GradientSet::zeros(params);
    for part in parts {
        let (loss, g) = part?;
        total += loss;
        if let Some(g) = g {
            grad.add_scaled(&g, 1.0);
        }
    }
    Ok((total, grad))
}

/// Dataset loss with fixed-seed embeddings and no parameter updates.
fn evaluation_loss(params: &GnnParams, data: &PreparedData, cfg: &TrainConfig) -> Result<f64, TrainError> {
    let k = params.hyper().k;
    let mode = EmbeddingMode::FixedSeed(cfg.eval_seed);
    dataset_loss(&data.dataset, &cfg.loss, |i, s| {
        let st = &data.states[i][s];
        let n = data.num_objects(i);
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(forward(params, st, &frame_for(st, n, k, mode, &mut unused))?.value())
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    pub valid_loss: f64,
    pub elapsed_secs: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub train_dataset: String,
    pub valid_dataset: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    /// Name of the base domain.
    pub domain: String,
    pub augmentation: AugmentationSpec,
    pub model: SavedModel,
    pub config: TrainConfig,
    pub seed: u64,
    pub epoch: usize,
    pub train_loss: f64,
    /// Measured with `config.loss`.
    pub valid_loss: f64,
    pub provenance: Provenance,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("checkpoint serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, TrainError> {
        let ck: Checkpoint = serde_json::from_str(text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TrainError::Checkpoint(format!("unsupported format {:?}", ck.format)));
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, TrainError> {
        let text = std::fs::read_to_string(path).map_err(|e| TrainError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Rebuilds the augmenter and network for `domain`, which must be the
    /// base domain the checkpoint was trained on.
    pub fn restore(&self, domain: &Domain) -> Result<(Augmenter, GnnParams), TrainError> {
        let augmenter = Augmenter::new(domain, &self.augmentation)?;
        let params = self.model.to_params(augmenter.domain())?;
        Ok((augmenter, params))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub best_epoch: usize,
    pub best_valid: f64,
    pub epochs: Vec<EpochRecord>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Lowest validation loss over all seeds; the earliest seed wins ties.
    pub best: Checkpoint,
    pub runs: Vec<SeedRun>,
    pub warnings: Vec<String>,
}

/// Trains one model per configured seed and keeps the checkpoint with the
/// lowest validation loss. `observer` sees every epoch as it completes.
pub fn train(
    train_data: &PreparedData,
    valid_data: &PreparedData,
    cfg: &TrainConfig,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    let domain = train_data.augmenter.domain();
    if valid_data.augmenter.domain().signature() != domain.signature() {
        return Err(TrainError::DatasetMismatch {
            dataset: signature_text(&valid_data.augmenter.domain().signature()),
            domain: signature_text(&domain.signature()),
        });
    }
    let provenance =
        Provenance { train_dataset: train_data.dataset.hash(), valid_dataset: valid_data.dataset.hash() };
    let roots = train_data.roots();
    if roots.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let budget = cfg.time_budget_secs;
    let mut warnings = Vec::new();
    let mut runs = Vec::new();
    let mut best: Option<Checkpoint> = None;

    for &seed in &cfg.seeds {
        let start = Instant::now();
        let hyper = crate::gnn::GnnHyper { seed, ..cfg.hyper };
        let mut params = init_params(domain, hyper)?;
        let mut adam = AdamState::new(params.len());
        let train_loss = evaluation_loss(&params, train_data, cfg)?;
        let valid_loss = evaluation_loss(&params, valid_data, cfg)?;
        let first = EpochRecord { seed, epoch: 0, train_loss, valid_loss, elapsed_secs: start.elapsed().as_secs_f64() };
        observer(&first);
        let mut run_best = (0, valid_loss, SavedModel::from_params(&params), train_loss);
        let mut epochs = vec![first];
        let mut order = roots.clone();

        'epochs: for epoch in 1..=cfg.max_epochs {
            if run_best.1 == 0.0 {
                break;
            }
            if start.elapsed().as_secs_f64() >= budget {
                warnings.push(format!("seed {seed}: wall-clock budget of {budget}s exhausted before epoch {epoch}"));
                break;
            }
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(&[seed, epoch as u64]));
            order.shuffle(&mut rng);
            let mut losses = Vec::new();
            let mut out_of_time = false;
            for (b, batch) in order.chunks(cfg.batch_size).enumerate() {
                let frames = match cfg.random_half {
                    RandomHalf::PerPass => Frames::Fresh(mix_seed(&[seed, epoch as u64, b as u64])),
                    RandomHalf::PerEpoch => Frames::Fixed(mix_seed(&[seed, epoch as u64])),
                    RandomHalf::PerState => Frames::Fixed(mix_seed(&[seed])),
                };
                let (loss, grad) = batch_loss(&params, train_data, batch, &cfg.loss, frames)?;
                optimizer_step(&mut params, &grad, &mut adam, cfg)?;
                losses.push(loss);
                if start.elapsed().as_secs_f64() >= budget {
                    out_of_time = true;
                    break;
                }
            }
            let train_loss = losses.iter().sum::<f64>() / losses.len() as f64;
            let valid_loss = evaluation_loss(&params, valid_data, cfg)?;
            let rec = EpochRecord { seed, epoch, train_loss, valid_loss, elapsed_secs: start.elapsed().as_secs_f64() };
            observer(&rec);
            epochs.push(rec);
            if valid_loss < run_best.1 {
                run_best = (epoch, valid_loss, SavedModel::from_params(&params), train_loss);
            }
            if out_of_time {
                warnings.push(format!("seed {seed}: wall-clock budget of {budget}s exhausted during epoch {epoch}"));
                break 'epochs;
            }
        }

        let (best_epoch, best_valid, model, train_loss) = run_best;
        runs.push(SeedRun { seed, best_epoch, best_valid, epochs });
        if best.as_ref().is_none_or(|b| best_valid < b.valid_loss) {
            best = Some(Checkpoint {
                format: CHECKPOINT_FORMAT.into(),
                domain: train_data.domain_name.clone(),
                augmentation: train_data.augmentation.clone(),
                model,
                config: cfg.clone(),
                seed,
                epoch: best_epoch,
                train_loss,
                valid_loss: best_valid,
                provenance: provenance.clone(),
            });
        }
    }
    Ok(TrainOutcome { best: best.expect("at least one seed"), runs, warnings })
}

impl TrainOutcome {
    /// Per-epoch log as tab-separated text with a version header.
    pub fn loss_log(&self) -> String {
        let mut out = String::from("# genplan-loss-log v1\nseed\tepoch\ttrain_loss\tvalid_loss\telapsed_secs\n");
        for run in &self.runs {
            for e in &run.epochs {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{:.9}\t{:.9}\t{:.3}",
                    e.seed, e.epoch, e.train_loss, e.valid_loss, e.elapsed_secs
                );
            }
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for run in &self.runs {
            let _ = writeln!(
                out,
                "seed {}: best validation loss {:.6} at epoch {} ({} epochs run)",
                run.seed,
                run.best_valid,
                run.best_epoch,
                run.epochs.len() - 1
            );
        }
        let _ = writeln!(
            out,
            "selected seed {} epoch {} validation loss {:.6}",
            self.best.seed, self.best.epoch, self.best.valid_loss
        );
        for w in &self.warnings {
            let _ = writeln!(out, "warning: {w}");
        }
        out
    }

    /// Writes `checkpoint.json`, `loss_log.tsv` and `train_report.txt`.
    pub fn write_run_dir(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        self.best.save(&dir.join("checkpoint.json"))?;
        std::fs::write(dir.join("loss_log.tsv"), self.loss_log())?;
        std::fs::write(dir.join("train_report.txt"), self.summary())
    }
}
