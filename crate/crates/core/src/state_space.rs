//! Explicit reachable state spaces, optimal goal distances, and the capped
//! training datasets built from them.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::grounding::{GroundAtom, State, Task};
use crate::pddl::{Domain, Instance, ObjId, PredId};

/// Per-instance sampling cap used when none is configured.
pub const DEFAULT_SAMPLE_CAP: usize = 40_000;

pub const DATASET_HEADER: &str = "genplan-dataset v1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StateSpaceError {
    #[error("instance {instance}: more than {cap} reachable states")]
    CapExceeded { instance: String, cap: usize },
    #[error("instance {a} ({pa}) and {b} ({pb}) are identical; partitions must be disjoint")]
    Overlap { a: String, pa: Partition, b: String, pb: Partition },
    #[error("dataset line {line}: {message}")]
    Format { line: usize, message: String },
}

/// Optimal cost-to-go. `None` marks states that cannot reach a goal.
pub type Distance = Option<u32>;

#[derive(Debug, Clone)]
pub struct TransitionSystem {
    pub instance_name: String,
    pub objects: Vec<String>,
    pub goal: Vec<GroundAtom>,
    /// States in BFS discovery order.
    pub states: Vec<State>,
    pub init: usize,
    /// `(ground action, target state)` per state, in successor order.
    pub edges: Vec<Vec<(usize, usize)>>,
    pub goal_flags: Vec<bool>,
    pub vstar: Vec<Distance>,
}

impl TransitionSystem {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, state: &State) -> Option<usize> {
        self.states.iter().position(|s| s == state)
    }

    /// Exact-integer check of `V*(s) = 0 ⇔ goal` and
    /// `V*(s) = 1 + min V*(s')` on every state. Returns the first violation.
    pub fn check_bellman(&self) -> Result<(), String> {
        for s in 0..self.len() {
            let best = self.edges[s].iter().filter_map(|&(_, t)| self.vstar[t]).min();
            let expected = if self.goal_flags[s] { Some(0) } else { best.map(|b| b + 1) };
            if self.vstar[s] != expected {
                return Err(format!(
                    "state {s}: stored V* {:?}, Bellman backup gives {:?}",
                    self.vstar[s], expected
                ));
            }
        }
        Ok(())
    }

    /// Lookup table from state to optimal distance.
    pub fn lookup(&self) -> HashMap<State, Distance> {
        self.states.iter().cloned().zip(self.vstar.iter().copied()).collect()
    }
}

/// Breadth-first expansion from the initial state. Fails once more than
/// `cap` states have been discovered. V* is filled in before returning.
pub fn expand(task: &Task, cap: usize) -> Result<TransitionSystem, StateSpaceError> {
    let cap_err = || StateSpaceError::CapExceeded { instance: task.instance.name.clone(), cap };
    let init = task.initial_state();
    let mut index: HashMap<State, usize> = HashMap::new();
    let mut states = vec![init.clone()];
    index.insert(init, 0);
    if cap == 0 {
        return Err(cap_err());
    }
    let mut edges = Vec::new();
    let mut next = 0;
    while next < states.len() {
        let succ = task.successors(&states[next]);
        let mut out = Vec::with_capacity(succ.len());
        for (action, s) in succ {
            let id = match index.get(&s) {
                Some(&id) => id,
                None => {
                    let id = states.len();
                    if id >= cap {
                        return Err(cap_err());
                    }
                    index.insert(s.clone(), id);
                    states.push(s);
                    id
                }
            };
            out.push((action, id));
        }
        edges.push(out);
        next += 1;
    }
    let goal_flags = states.iter().map(|s| task.is_goal(s)).collect();
    let ts = TransitionSystem {
        instance_name: task.instance.name.clone(),
        objects: task.instance.objects.clone(),
        goal: task.instance.goal.clone(),
        init: 0,
        vstar: vec![None; states.len()],
        states,
        edges,
        goal_flags,
    };
    Ok(compute_vstar(ts))
}

/// Backward breadth-first search from all goal states over reversed edges.
pub fn compute_vstar(mut ts: TransitionSystem) -> TransitionSystem {
    let n = ts.len();
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (s, out) in ts.edges.iter().enumerate() {
        for &(_, t) in out {
            reverse[t].push(s);
        }
    }
    let mut dist: Vec<Distance> = vec![None; n];
    let mut queue = VecDeque::new();
    for (s, &g) in ts.goal_flags.iter().enumerate() {
        if g {
            dist[s] = Some(0);
            queue.push_back(s);
        }
    }
    while let Some(t) = queue.pop_front() {
        let d = dist[t].unwrap_or(0) + 1;
        for &s in &reverse[t] {
            if dist[s].is_none() {
                dist[s] = Some(d);
                queue.push_back(s);
            }
        }
    }
    ts.vstar = dist;
    ts
}

/// Result of the internal optimal-length oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OptimalLength {
    Length(u32),
    Timeout,
    Unsolvable,
}

impl OptimalLength {
    pub fn length(self) -> Option<u32> {
        match self {
            OptimalLength::Length(l) => Some(l),
            _ => None,
        }
    }
}

/// Shortest plan length by uninformed breadth-first search. `node_budget`
/// bounds the number of generated states (including the initial one), and
/// the wall-clock budget is checked between expansions.
pub fn optimal_plan_length(task: &Task, node_budget: usize, time_budget: Duration) -> OptimalLength {
    let start = Instant::now();
    if node_budget == 0 || time_budget.is_zero() {
        return OptimalLength::Timeout;
    }
    let init = task.initial_state();
    if task.is_goal(&init) {
        return OptimalLength::Length(0);
    }
    let mut seen: HashSet<State> = HashSet::new();
    seen.insert(init.clone());
    let mut frontier = vec![init];
    let mut depth = 0u32;
    while !frontier.is_empty() {
        depth += 1;
        let mut next = Vec::new();
        for s in &frontier {
            if start.elapsed() > time_budget {
                return OptimalLength::Timeout;
            }
            for (_, t) in task.successors(s) {
                if seen.contains(&t) {
                    continue;
                }
                if task.is_goal(&t) {
                    return OptimalLength::Length(depth);
                }
                if seen.len() >= node_budget {
                    return OptimalLength::Timeout;
                }
                seen.insert(t.clone());
                next.push(t);
            }
        }
        frontier = next;
    }
    OptimalLength::Unsolvable
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl std::fmt::Display for Partition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Partition::Train => "train",
            Partition::Validation => "validation",
            Partition::Test => "test",
        })
    }
}

impl std::str::FromStr for Partition {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "train" => Ok(Partition::Train),
            "validation" => Ok(Partition::Validation),
            "test" => Ok(Partition::Test),
            other => Err(format!("unknown partition {other}")),
        }
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

/// Identity of an instance for the disjointness rule: object count, init
/// and goal. Object names do not matter.
pub fn instance_fingerprint(instance: &Instance) -> String {
    let mut text = format!("{}", instance.objects.len());
    for (tag, atoms) in [("init", &instance.init), ("goal", &instance.goal)] {
        let _ = write!(text, "|{tag}");
        for a in atoms {
            let _ = write!(text, " {}:{:?}", a.pred.0, a.args.iter().map(|o| o.0).collect::<Vec<_>>());
        }
    }
    sha256_hex(text.as_bytes())
}

/// Rejects any instance that appears in more than one partition.
pub fn check_disjoint(partitions: &[(Partition, &[Instance])]) -> Result<(), StateSpaceError> {
    let mut seen: HashMap<String, (Partition, &str)> = HashMap::new();
    for (p, instances) in partitions {
        for inst in *instances {
            let fp = instance_fingerprint(inst);
            if let Some((q, name)) = seen.get(&fp) {
                if q != p {
                    return Err(StateSpaceError::Overlap {
                        a: name.to_string(),
                        pa: *q,
                        b: inst.name.clone(),
                        pb: *p,
                    });
                }
            }
            seen.insert(fp, (*p, &inst.name));
        }
    }
    Ok(())
}

/// One labelled root state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Record {
    /// Index into the owning instance's state pool.
    pub state: usize,
    pub vstar: u32,
    pub is_goal: bool,
    /// Pool indices of the distinct one-step successors, in successor order.
    pub successors: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetInstance {
    pub id: String,
    pub objects: Vec<String>,
    pub goal: Vec<GroundAtom>,
    /// Sampled states followed by any successor states they need.
    pub states: Vec<State>,
    pub records: Vec<Record>,
    /// Reachable states before sampling.
    pub reachable: usize,
}

impl DatasetInstance {
    pub fn goal_ratio(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().filter(|r| r.is_goal).count() as f64 / self.records.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dataset {
    pub partition: Partition,
    /// Predicate `name/arity` list the atom ids refer to.
    pub signature: Vec<(String, usize)>,
    pub instances: Vec<DatasetInstance>,
}

impl Dataset {
    pub fn num_records(&self) -> usize {
        self.instances.iter().map(|i| i.records.len()).sum()
    }

    /// SHA-256 of the serialized form.
    pub fn hash(&self) -> String {
        sha256_hex(self.to_text().as_bytes())
    }
}

/// Keeps every solvable state of each system, or a uniform sample of `cap`
/// of them (without replacement, seeded per instance). Successor states of
/// kept states are stored as well, so Bellman losses can be evaluated.
pub fn sample_dataset(
    domain: &Domain,
    systems: &[&TransitionSystem],
    cap: usize,
    seed: u64,
    partition: Partition,
) -> Dataset {
    let instances = systems
        .iter()
        .enumerate()
        .map(|(k, ts)| {
            let solvable: Vec<usize> = (0..ts.len()).filter(|&s| ts.vstar[s].is_some()).collect();
            let chosen: Vec<usize> = if solvable.len() <= cap {
                solvable
            } else {
                let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (k as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
                let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, solvable.len(), cap)
                    .into_iter()
                    .map(|i| solvable[i])
                    .collect();
                pick.sort_unstable();
                pick
            };
            let mut pool_of: HashMap<usize, usize> = HashMap::new();
            let mut states = Vec::new();
            for &s in &chosen {
                pool_of.insert(s, states.len());
                states.push(ts.states[s].clone());
            }
            let mut records = Vec::with_capacity(chosen.len());
            for &s in &chosen {
                let mut successors = Vec::new();
                for &(_, t) in &ts.edges[s] {
                    let id = *pool_of.entry(t).or_insert_with(|| {
                        states.push(ts.states[t].clone());
                        states.len() - 1
                    });
                    if !successors.contains(&id) {
                        successors.push(id);
                    }
                }
                records.push(Record {
                    state: pool_of[&s],
                    vstar: ts.vstar[s].expect("solvable"),
                    is_goal: ts.goal_flags[s],
                    successors,
                });
            }
            DatasetInstance {
                id: ts.instance_name.clone(),
                objects: ts.objects.clone(),
                goal: ts.goal.clone(),
                states,
                records,
                reachable: ts.len(),
            }
        })
        .collect();
    Dataset { partition, signature: domain.signature(), instances }
}

fn write_atoms(out: &mut String, atoms: &[GroundAtom], sig: &[(String, usize)], objects: &[String]) {
    for a in atoms {
        let _ = write!(out, " ({}", sig[a.pred.index()].0);
        for o in &a.args {
            let _ = write!(out, " {}", objects[o.index()]);
        }
        out.push(')');
    }
}

impl Dataset {
    /// Line-oriented text form:
    ///
    /// ```text
    /// genplan-dataset v1
    /// partition train
    /// signature on/2 clear/1 ...
    /// instance <id> objects <n> states <pool> records <r> reachable <n> goal-ratio <x>
    /// objects <name>...
    /// goal (<pred> <obj>...)...
    /// s <pool index> (<pred> <obj>...)...
    /// r <pool index> <V*> <goal 0|1> <successor pool index>...
    /// end
    /// ```
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{DATASET_HEADER}\npartition {}", self.partition);
        out.push_str("signature");
        for (n, a) in &self.signature {
            let _ = write!(out, " {n}/{a}");
        }
        out.push('\n');
        for inst in &self.instances {
            let _ = writeln!(
                out,
                "instance {} objects {} states {} records {} reachable {} goal-ratio {:.6}",
                inst.id,
                inst.objects.len(),
                inst.states.len(),
                inst.records.len(),
                inst.reachable,
                inst.goal_ratio()
            );
            let _ = writeln!(out, "objects {}", inst.objects.join(" "));
            out.push_str("goal");
            write_atoms(&mut out, &inst.goal, &self.signature, &inst.objects);
            out.push('\n');
            for (i, s) in inst.states.iter().enumerate() {
                let _ = write!(out, "s {i}");
                write_atoms(&mut out, s.atoms(), &self.signature, &inst.objects);
                out.push('\n');
            }
            for r in &inst.records {
                let _ = write!(out, "r {} {} {}", r.state, r.vstar, u8::from(r.is_goal));
                for s in &r.successors {
                    let _ = write!(out, " {s}");
                }
                out.push('\n');
            }
            out.push_str("end\n");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Dataset, StateSpaceError> {
        let mut r = LineReader { lines: text.lines().enumerate().peekable(), line: 0 };
        let header = r.next("header")?;
        if header != DATASET_HEADER {
            return Err(r.fail("unsupported dataset header"));
        }
        let partition: Partition = r
            .keyword("partition")?
            .trim()
            .parse()
            .map_err(|e: String| r.fail(&e))?;
        let signature: Vec<(String, usize)> = r
            .keyword("signature")?
            .split_whitespace()
            .map(|t| {
                let (n, a) = t.rsplit_once('/').ok_or_else(|| r.fail("bad signature entry"))?;
                Ok((n.to_string(), a.parse().map_err(|_| r.fail("bad arity"))?))
            })
            .collect::<Result<_, StateSpaceError>>()?;
        let pred_index: HashMap<&str, usize> =
            signature.iter().enumerate().map(|(i, (n, _))| (n.as_str(), i)).collect();

        let mut instances = Vec::new();
        while r.lines.peek().is_some() {
            let toks: Vec<&str> = r.keyword("instance")?.split_whitespace().collect();
            if toks.len() != 11 {
                return Err(r.fail("malformed instance header"));
            }
            let num = |i: usize| toks[i].parse::<usize>().map_err(|_| r.fail("bad number"));
            let (n_obj, n_states, n_records, reachable) = (num(2)?, num(4)?, num(6)?, num(8)?);
            let id = toks[0].to_string();
            let objects: Vec<String> = r.keyword("objects")?.split_whitespace().map(String::from).collect();
            if objects.len() != n_obj {
                return Err(r.fail("object count mismatch"));
            }
            let obj_index: HashMap<&str, u32> =
                objects.iter().enumerate().map(|(i, o)| (o.as_str(), i as u32)).collect();
            let parse_atoms = |r: &LineReader, s: &str| -> Result<Vec<GroundAtom>, StateSpaceError> {
                s.split(')')
                    .map(str::trim)
                    .filter(|t| !t.is_empty())
                    .map(|t| {
                        let mut parts = t.trim_start_matches('(').split_whitespace();
                        let p = parts.next().ok_or_else(|| r.fail("empty atom"))?;
                        let pred = *pred_index.get(p).ok_or_else(|| r.fail("unknown predicate"))?;
                        let args = parts
                            .map(|o| obj_index.get(o).map(|&i| ObjId(i)).ok_or_else(|| r.fail("unknown object")))
                            .collect::<Result<Vec<_>, _>>()?;
                        if args.len() != signature[pred].1 {
                            return Err(r.fail("arity mismatch"));
                        }
                        Ok(GroundAtom::new(PredId(pred as u32), args))
                    })
                    .collect()
            };
            let g = r.keyword("goal")?;
            let goal = parse_atoms(&r, g)?;
            let mut states = Vec::with_capacity(n_states);
            for i in 0..n_states {
                let rest = r.keyword("s")?;
                let (idx, atoms) = rest.split_once(' ').unwrap_or((rest, ""));
                if idx.parse::<usize>().ok() != Some(i) {
                    return Err(r.fail("state index out of order"));
                }
                states.push(State::new(parse_atoms(&r, atoms)?));
            }
            let mut records = Vec::with_capacity(n_records);
            for _ in 0..n_records {
                let t: Vec<&str> = r.keyword("r")?.split_whitespace().collect();
                if t.len() < 3 {
                    return Err(r.fail("malformed record"));
                }
                let idx = |s: &str| -> Result<usize, StateSpaceError> {
                    match s.parse::<usize>() {
                        Ok(v) if v < states.len() => Ok(v),
                        _ => Err(r.fail("bad state index")),
                    }
                };
                records.push(Record {
                    state: idx(t[0])?,
                    vstar: t[1].parse().map_err(|_| r.fail("bad V*"))?,
                    is_goal: match t[2] {
                        "0" => false,
                        "1" => true,
                        _ => return Err(r.fail("bad goal flag")),
                    },
                    successors: t[3..].iter().map(|s| idx(s)).collect::<Result<_, _>>()?,
                });
            }
            if r.next("end")? != "end" {
                return Err(r.fail("expected end"));
            }
            instances.push(DatasetInstance { id, objects, goal, states, records, reachable });
        }
        Ok(Dataset { partition, signature, instances })
    }
}

struct LineReader<'a> {
    lines: std::iter::Peekable<std::iter::Enumerate<std::str::Lines<'a>>>,
    line: usize,
}

impl<'a> LineReader<'a> {
    fn fail(&self, message: &str) -> StateSpaceError {
        StateSpaceError::Format { line: self.line, message: message.to_string() }
    }

    fn next(&mut self, what: &str) -> Result<&'a str, StateSpaceError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.line = i + 1;
                Ok(l)
            }
            None => Err(self.fail(&format!("unexpected end of input, expected {what}"))),
        }
    }

    /// Next line, which must be `keyword` alone or followed by a space.
    fn keyword(&mut self, keyword: &str) -> Result<&'a str, StateSpaceError> {
        let l = self.next(keyword)?;
        match l.strip_prefix(keyword) {
            Some("") => Ok(""),
            Some(rest) if rest.starts_with(' ') => Ok(&rest[1..]),
            _ => Err(self.fail(&format!("expected {keyword} line"))),
        }
    }
}
