//! Run configuration: one TOML file per experiment cell, plus flag
//! overrides.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use genplan_core::derived::AugmentationSpec;
use genplan_core::pddl::{parse_domain, parse_instance, validate};
use genplan_core::policy::{ExecMode, DEFAULT_STEP_LIMIT};
use genplan_core::state_space::{check_disjoint, Partition, DEFAULT_SAMPLE_CAP};
use genplan_core::training::TrainConfig;
use genplan_core::{domains, generators, Domain, Instance};
use serde::{Deserialize, Serialize};

use crate::Failure;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeSelection {
    Plain,
    CycleAvoid,
    Both,
}

impl ModeSelection {
    pub fn modes(self) -> Vec<ExecMode> {
        match self {
            ModeSelection::Plain => vec![ExecMode::Plain],
            ModeSelection::CycleAvoid => vec![ExecMode::CycleAvoid],
            ModeSelection::Both => ExecMode::ALL.to_vec(),
        }
    }
}

/// Where an instance comes from: a PDDL file, or the bundled generator of
/// the configured domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged, deny_unknown_fields)]
pub enum InstanceSource {
    File { file: PathBuf },
    Generated { sizes: Vec<usize>, #[serde(default)] seed: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Budgets {
    /// Largest state space `expand` accepts per instance.
    pub expand_cap: usize,
    /// Largest number of root states kept per training instance.
    pub sample_cap: usize,
    pub sample_seed: u64,
    /// Generated-state budget of the optimal-length oracle.
    pub oracle_nodes: usize,
    pub oracle_secs: f64,
}

impl Default for Budgets {
    fn default() -> Self {
        Self { expand_cap: 200_000, sample_cap: DEFAULT_SAMPLE_CAP, sample_seed: 0, oracle_nodes: 2_000_000, oracle_secs: 60.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExecConfig {
    pub mode: ModeSelection,
    pub step_limit: usize,
    /// Defaults to `checkpoint.json` in the output directory.
    pub checkpoint: Option<PathBuf>,
    /// Include the state before every action in trace files.
    pub with_states: bool,
}

impl Default for ExecConfig {
    fn default() -> Self {
        Self { mode: ModeSelection::Both, step_limit: DEFAULT_STEP_LIMIT, checkpoint: None, with_states: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// A bundled domain name or a path to a domain file.
    pub domain: String,
    #[serde(default = "default_augmentation")]
    pub augmentation: String,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; 0 uses every core.
    #[serde(default)]
    pub jobs: usize,
    #[serde(default)]
    pub train: Vec<InstanceSource>,
    #[serde(default)]
    pub validation: Vec<InstanceSource>,
    #[serde(default)]
    pub test: Vec<InstanceSource>,
    #[serde(default)]
    pub training: TrainConfig,
    #[serde(default)]
    pub budgets: Budgets,
    #[serde(default)]
    pub exec: ExecConfig,
}

fn default_augmentation() -> String {
    "goal-only".into()
}

fn default_out() -> PathBuf {
    PathBuf::from("genplan-out")
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub loss: Option<genplan_core::training::LossKind>,
    pub mode: Option<ModeSelection>,
    pub out: Option<PathBuf>,
    pub jobs: Option<usize>,
}

/// A loaded configuration with its domain and instances.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub domain: Arc<Domain>,
    pub augmentation: AugmentationSpec,
}

fn absolute(base: &Path, p: &Path) -> PathBuf {
    let joined = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
    std::path::absolute(&joined).unwrap_or(joined)
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg: RunConfig =
            toml::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    /// Makes every path absolute relative to `base`, so a snapshot replays
    /// from any directory.
    fn resolve_paths(&mut self, base: &Path) {
        if domains::source(&self.domain).is_none() {
            self.domain = absolute(base, Path::new(&self.domain)).display().to_string();
        }
        self.out = absolute(base, &self.out);
        for src in self.train.iter_mut().chain(&mut self.validation).chain(&mut self.test) {
            if let InstanceSource::File { file } = src {
                *file = absolute(base, file);
            }
        }
        if let Some(c) = &mut self.exec.checkpoint {
            *c = absolute(base, c);
        }
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.training.seeds = vec![seed];
            self.training.hyper.seed = seed;
        }
        if let Some(loss) = o.loss {
            self.training.loss.kind = loss;
        }
        if let Some(mode) = o.mode {
            self.exec.mode = mode;
        }
        if let Some(out) = &o.out {
            self.out = std::path::absolute(out).unwrap_or_else(|_| out.clone());
        }
        if let Some(jobs) = o.jobs {
            self.jobs = jobs;
        }
    }

    /// Parses the domain and checks everything that can be checked without
    /// touching instances.
    pub fn load(self) -> Result<Loaded, Failure> {
        let domain = match domains::load(&self.domain) {
            Some(d) => d,
            None => {
                let text = std::fs::read_to_string(&self.domain)
                    .map_err(|e| Failure::Config(format!("domain {}: {e}", self.domain)))?;
                parse_domain(&text).map_err(|e| Failure::Config(e.render(&self.domain)))?
            }
        };
        let augmentation =
            AugmentationSpec::preset(&self.augmentation).map_err(|e| Failure::Config(e.to_string()))?;
        self.training.validate().map_err(|e| Failure::Config(e.to_string()))?;
        let b = &self.budgets;
        if b.expand_cap == 0 || b.sample_cap == 0 {
            return Err(Failure::Config("budgets.expand_cap and budgets.sample_cap must be positive".into()));
        }
        if b.oracle_secs.is_nan() || b.oracle_secs < 0.0 {
            return Err(Failure::Config("budgets.oracle_secs must be non-negative".into()));
        }
        Ok(Loaded { config: self, domain: Arc::new(domain), augmentation })
    }

    /// TOML text of the effective configuration.
    pub fn snapshot(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }
}

impl Loaded {
    fn sources(&self, partition: Partition) -> &[InstanceSource] {
        match partition {
            Partition::Train => &self.config.train,
            Partition::Validation => &self.config.validation,
            Partition::Test => &self.config.test,
        }
    }

    pub fn instances(&self, partition: Partition) -> Result<Vec<Instance>, Failure> {
        self.sources(partition).iter().map(|s| self.instance(s)).collect()
    }

    fn instance(&self, src: &InstanceSource) -> Result<Instance, Failure> {
        let (label, text) = match src {
            InstanceSource::File { file } => {
                let text = std::fs::read_to_string(file)
                    .map_err(|e| Failure::Config(format!("instance {}: {e}", file.display())))?;
                (file.display().to_string(), text)
            }
            InstanceSource::Generated { sizes, seed } => {
                let text = generators::generate(&self.domain.name, sizes, *seed).ok_or_else(|| {
                    Failure::Config(format!("no bundled generator for domain {}", self.domain.name))
                })?;
                (format!("generated {}{sizes:?} seed {seed}", self.domain.name), text)
            }
        };
        let inst = parse_instance(&text, &self.domain).map_err(|e| Failure::Config(e.render(&label)))?;
        let problems = validate(&self.domain, &inst);
        if let Some(first) = problems.first() {
            return Err(Failure::Config(format!("{label}: {first}")));
        }
        Ok(inst)
    }

    /// All three partitions, checked for overlap.
    pub fn partitions(&self) -> Result<Vec<(Partition, Vec<Instance>)>, Failure> {
        let parts = [Partition::Train, Partition::Validation, Partition::Test]
            .into_iter()
            .map(|p| Ok((p, self.instances(p)?)))
            .collect::<Result<Vec<_>, Failure>>()?;
        let view: Vec<(Partition, &[Instance])> = parts.iter().map(|(p, v)| (*p, v.as_slice())).collect();
        check_disjoint(&view).map_err(|e| Failure::Config(e.to_string()))?;
        Ok(parts)
    }

    pub fn checkpoint_path(&self) -> PathBuf {
        self.config.exec.checkpoint.clone().unwrap_or_else(|| self.config.out.join("checkpoint.json"))
    }
}
