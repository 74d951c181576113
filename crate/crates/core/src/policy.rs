//! Greedy execution of the policy induced by a value function.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::derived::Augmenter;
use crate::gnn::{value_of, EmbeddingMode, GnnError, GnnParams};
use crate::grounding::{State, Task};
use crate::state_space::TransitionSystem;

pub const DEFAULT_STEP_LIMIT: usize = 1000;

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error("state not covered by the lookup table of {instance}")]
    UnknownState { instance: String },
    #[error(transparent)]
    Gnn(#[from] GnnError),
    #[error("trace line {line}: {message}")]
    Format { line: usize, message: String },
}

/// A state evaluator used to rank successors.
pub trait ValueFunction: Sync {
    fn value(&self, task: &Task, state: &State) -> Result<f64, PolicyError>;

    /// Seed of the fixed initial embeddings, for evaluators that use one.
    fn eval_seed(&self) -> Option<u64> {
        None
    }
}

/// A trained network on an augmented domain, evaluated with fixed-seed
/// initial embeddings.
#[derive(Debug, Clone)]
pub struct GnnValue {
    augmenter: Augmenter,
    params: GnnParams,
    seed: u64,
}

impl GnnValue {
    pub fn new(augmenter: Augmenter, params: GnnParams, eval_seed: u64) -> Result<Self, GnnError> {
        params.check_domain(augmenter.domain())?;
        Ok(Self { augmenter, params, seed: eval_seed })
    }
}

impl ValueFunction for GnnValue {
    fn value(&self, task: &Task, state: &State) -> Result<f64, PolicyError> {
        let augmented = self.augmenter.augment(state, &task.instance.goal);
        // Fixed-seed mode never draws from this generator.
        let mut unused = ChaCha8Rng::seed_from_u64(0);
        Ok(value_of(
            &self.params,
            &augmented,
            task.instance.objects.len(),
            EmbeddingMode::FixedSeed(self.seed),
            &mut unused,
        )?)
    }

    fn eval_seed(&self) -> Option<u64> {
        Some(self.seed)
    }
}

/// Exact V* read from a fully expanded state space. Dead ends evaluate
/// to infinity.
#[derive(Debug, Clone)]
pub struct VStarLookup {
    instance: String,
    table: HashMap<State, Option<u32>>,
}

impl VStarLookup {
    pub fn new(ts: &TransitionSystem) -> Self {
        Self { instance: ts.instance_name.clone(), table: ts.lookup() }
    }
}

impl ValueFunction for VStarLookup {
    fn value(&self, _: &Task, state: &State) -> Result<f64, PolicyError> {
        match self.table.get(state) {
            Some(Some(d)) => Ok(f64::from(*d)),
            Some(None) => Ok(f64::INFINITY),
            None => Err(PolicyError::UnknownState { instance: self.instance.clone() }),
        }
    }
}

/// The same value everywhere.
#[derive(Debug, Clone, Copy)]
pub struct ConstantValue(pub f64);

impl ValueFunction for ConstantValue {
    fn value(&self, _: &Task, _: &State) -> Result<f64, PolicyError> {
        Ok(self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExecMode {
    Plain,
    CycleAvoid,
}

impl ExecMode {
    pub const ALL: [ExecMode; 2] = [ExecMode::Plain, ExecMode::CycleAvoid];
}

impl std::fmt::Display for ExecMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ExecMode::Plain => "plain",
            ExecMode::CycleAvoid => "cycle-avoid",
        })
    }
}

impl std::str::FromStr for ExecMode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "plain" => Ok(ExecMode::Plain),
            "cycle-avoid" => Ok(ExecMode::CycleAvoid),
            other => Err(format!("unknown mode {other}, expected plain or cycle-avoid")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Outcome {
    Solved,
    StepLimit,
    /// A non-goal state without applicable actions.
    Stuck,
    /// Cycle avoidance found every successor already visited.
    Cycle,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Solved => "solved",
            Outcome::StepLimit => "step-limit",
            Outcome::Stuck => "stuck",
            Outcome::Cycle => "cycle",
        })
    }
}

impl std::str::FromStr for Outcome {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "solved" => Ok(Outcome::Solved),
            "step-limit" => Ok(Outcome::StepLimit),
            "stuck" => Ok(Outcome::Stuck),
            "cycle" => Ok(Outcome::Cycle),
            other => Err(format!("unknown outcome {other}")),
        }
    }
}

/// Result of one greedy step.
#[derive(Debug, Clone, PartialEq)]
pub enum GreedyStep {
    Move { action: usize, next: State, value: f64 },
    Stuck,
    AllVisited,
}

/// Picks the first successor of minimal value, skipping states in
/// `visited` when it is given. `cache` memoizes evaluations across steps.
pub fn greedy_step(
    value: &dyn ValueFunction,
    task: &Task,
    state: &State,
    visited: Option<&HashSet<State>>,
    cache: &mut HashMap<State, f64>,
) -> Result<GreedyStep, PolicyError> {
    let succ = task.successors(state);
    if succ.is_empty() {
        return Ok(GreedyStep::Stuck);
    }
    let mut best: Option<(usize, State, f64)> = None;
    for (action, next) in succ {
        if visited.is_some_and(|v| v.contains(&next)) {
            continue;
        }
        let v = match cache.get(&next) {
            Some(&v) => v,
            None => {
                let v = value.value(task, &next)?;
                cache.insert(next.clone(), v);
                v
            }
        };
        if best.as_ref().is_none_or(|(_, _, b)| v < *b) {
            best = Some((action, next, v));
        }
    }
    Ok(match best {
        Some((action, next, value)) => GreedyStep::Move { action, next, value },
        None => GreedyStep::AllVisited,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceStep {
    /// State the action is applied in.
    pub state: State,
    pub action: usize,
    pub action_name: String,
    /// Value of the successor the action leads to.
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyTrace {
    pub domain: String,
    pub instance: String,
    pub mode: ExecMode,
    pub steps: Vec<TraceStep>,
    pub final_state: State,
    pub outcome: Outcome,
    pub plan_length: usize,
    pub eval_seed: Option<u64>,
}

/// Run-level facts of a trace, enough to build a report.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub domain: String,
    pub instance: String,
    pub mode: ExecMode,
    pub outcome: Outcome,
    pub plan_length: usize,
}

/// Runs the greedy policy from the initial state until the goal, a failure
/// or `step_limit` actions.
pub fn execute(value: &dyn ValueFunction, task: &Task, mode: ExecMode, step_limit: usize) -> Result<PolicyTrace, PolicyError> {
    let mut state = task.initial_state();
    let mut visited = HashSet::from([state.clone()]);
    let mut cache = HashMap::new();
    let mut steps = Vec::new();
    let outcome = loop {
        if task.is_goal(&state) {
            break Outcome::Solved;
        }
        if steps.len() >= step_limit {
            break Outcome::StepLimit;
        }
        let filter = (mode == ExecMode::CycleAvoid).then_some(&visited);
        match greedy_step(value, task, &state, filter, &mut cache)? {
            GreedyStep::Stuck => break Outcome::Stuck,
            GreedyStep::AllVisited => break Outcome::Cycle,
            GreedyStep::Move { action, next, value } => {
                visited.insert(next.clone());
                let prev = std::mem::replace(&mut state, next);
                steps.push(TraceStep { state: prev, action, action_name: task.action_name(action), value });
            }
        }
    };
    Ok(PolicyTrace {
        domain: task.domain.name.clone(),
        instance: task.instance.name.clone(),
        mode,
        plan_length: steps.len(),
        steps,
        final_state: state,
        outcome,
        eval_seed: value.eval_seed(),
    })
}

/// [`execute`] over many tasks in parallel, in input order.
pub fn execute_all(
    value: &dyn ValueFunction,
    tasks: &[Task],
    mode: ExecMode,
    step_limit: usize,
) -> Result<Vec<PolicyTrace>, PolicyError> {
    tasks.par_iter().map(|t| execute(value, t, mode, step_limit)).collect()
}

const TRACE_HEADER: &str = "genplan-trace v1";

impl PolicyTrace {
    pub fn summary(&self) -> TraceSummary {
        TraceSummary {
            domain: self.domain.clone(),
            instance: self.instance.clone(),
            mode: self.mode,
            outcome: self.outcome,
            plan_length: self.plan_length,
        }
    }

    /// Line-oriented export. Actions are always listed; the state before
    /// each action is included when `with_states` is set.
    pub fn to_text(&self, task: &Task, with_states: bool) -> String {
        let mut out = String::new();
        let seed = self.eval_seed.map_or_else(|| "none".to_string(), |s| s.to_string());
        let _ = writeln!(out, "{TRACE_HEADER}");
        let _ = writeln!(out, "domain {}", self.domain);
        let _ = writeln!(out, "instance {}", self.instance);
        let _ = writeln!(out, "mode {}", self.mode);
        let _ = writeln!(out, "eval-seed {seed}");
        let _ = writeln!(out, "outcome {}", self.outcome);
        let _ = writeln!(out, "plan-length {}", self.plan_length);
        for (i, step) in self.steps.iter().enumerate() {
            let _ = writeln!(out, "step {i} {} {}", step.action_name, step.value);
            if with_states {
                let atoms: Vec<String> = step
                    .state
                    .atoms()
                    .iter()
                    .map(|a| a.display(&task.domain, &task.instance.objects).to_string())
                    .collect();
                let _ = writeln!(out, "  state {}", atoms.join(" "));
            }
        }
        out.push_str("end\n");
        out
    }
}

impl TraceSummary {
    /// Reads the header of a text trace written by [`PolicyTrace::to_text`].
    pub fn from_text(text: &str) -> Result<Self, PolicyError> {
        let mut lines = text.lines().enumerate();
        let err = |line: usize, message: String| PolicyError::Format { line: line + 1, message };
        match lines.next() {
            Some((_, TRACE_HEADER)) => {}
            _ => return Err(err(0, format!("expected header {TRACE_HEADER}"))),
        }
        let mut field = |key: &str| {
            let (n, line) = lines.next().ok_or_else(|| err(0, format!("missing {key}")))?;
            line.strip_prefix(key)
                .and_then(|r| r.strip_prefix(' '))
                .map(|v| (n, v.to_string()))
                .ok_or_else(|| err(n, format!("expected {key}")))
        };
        let (_, domain) = field("domain")?;
        let (_, instance) = field("instance")?;
        let (n, mode) = field("mode")?;
        let mode = mode.parse().map_err(|m| err(n, m))?;
        field("eval-seed")?;
        let (n, outcome) = field("outcome")?;
        let outcome = outcome.parse().map_err(|m| err(n, m))?;
        let (n, len) = field("plan-length")?;
        let plan_length = len.parse().map_err(|_| err(n, format!("bad plan length {len}")))?;
        Ok(TraceSummary { domain, instance, mode, outcome, plan_length })
    }
}
