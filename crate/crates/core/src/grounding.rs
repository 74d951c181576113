//! Naive full grounding and the successor function of the induced state model.

use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::pddl::{canonicalize_atoms, ActionSchema, Domain, Instance, LiftedAtom, ObjId, PredId, Term};
pub use crate::pddl::GroundAtom;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroundingError {
    #[error("action {action} is not applicable: precondition {missing} does not hold")]
    NotApplicable { action: String, missing: String },
}

/// A set of ground atoms in canonical (sorted, duplicate-free) order, so
/// equality and hashing respect set semantics.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct State {
    atoms: Vec<GroundAtom>,
}

impl State {
    pub fn new(mut atoms: Vec<GroundAtom>) -> Self {
        canonicalize_atoms(&mut atoms);
        Self { atoms }
    }

    pub fn atoms(&self) -> &[GroundAtom] {
        &self.atoms
    }

    pub fn into_atoms(self) -> Vec<GroundAtom> {
        self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn contains(&self, atom: &GroundAtom) -> bool {
        self.atoms.binary_search(atom).is_ok()
    }

    pub fn contains_all(&self, atoms: &[GroundAtom]) -> bool {
        atoms.iter().all(|a| self.contains(a))
    }

    /// Atoms of one predicate. They are contiguous in canonical order.
    pub fn atoms_of(&self, pred: PredId) -> &[GroundAtom] {
        let lo = self.atoms.partition_point(|a| a.pred < pred);
        let hi = self.atoms.partition_point(|a| a.pred <= pred);
        &self.atoms[lo..hi]
    }

    /// A copy containing only atoms whose predicate passes `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(PredId) -> bool) -> State {
        State { atoms: self.atoms.iter().filter(|a| keep(a.pred)).cloned().collect() }
    }

    /// Adds atoms, keeping the canonical order.
    pub fn extend(&mut self, atoms: impl IntoIterator<Item = GroundAtom>) {
        self.atoms.extend(atoms);
        canonicalize_atoms(&mut self.atoms);
    }

    /// Stable 64-bit digest (FNV-1a over predicate and object ids). Used to
    /// seed per-state randomness, so it must not change between builds.
    pub fn digest(&self) -> u64 {
        const PRIME: u64 = 0x100_0000_01b3;
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u32| {
            for b in v.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(PRIME);
            }
        };
        for a in &self.atoms {
            eat(a.pred.0);
            eat(a.args.len() as u32);
            for o in &a.args {
                eat(o.0);
            }
        }
        h
    }
}

/// A schema instantiated under a parameter binding. `delete` excludes atoms
/// that are also added, so `add ∩ delete = ∅` always holds and
/// `(s \ delete) ∪ add` keeps the add-after-delete reading of STRIPS.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundAction {
    pub schema: usize,
    pub binding: Vec<ObjId>,
    pub precondition: Vec<GroundAtom>,
    pub add: Vec<GroundAtom>,
    pub delete: Vec<GroundAtom>,
}

impl GroundAction {
    fn new(schema_idx: usize, schema: &ActionSchema, binding: Vec<ObjId>) -> Self {
        let inst = |atoms: &[LiftedAtom]| {
            let mut out: Vec<GroundAtom> = atoms
                .iter()
                .map(|a| {
                    GroundAtom::new(
                        a.pred,
                        a.args.iter().map(|t| match *t {
                            Term::Var(i) => binding[i],
                            Term::Const(c) => ObjId(c as u32),
                        }),
                    )
                })
                .collect();
            canonicalize_atoms(&mut out);
            out
        };
        let precondition = inst(&schema.precondition);
        let add = inst(&schema.add);
        let mut delete = inst(&schema.delete);
        delete.retain(|d| add.binary_search(d).is_err());
        Self { schema: schema_idx, binding, precondition, add, delete }
    }

    pub fn display<'a>(&'a self, domain: &'a Domain, instance: &'a Instance) -> ActionDisplay<'a> {
        ActionDisplay { action: self, domain, instance }
    }
}

pub struct ActionDisplay<'a> {
    action: &'a GroundAction,
    domain: &'a Domain,
    instance: &'a Instance,
}

impl fmt::Display for ActionDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}", self.domain.schemas[self.action.schema].name)?;
        for o in &self.action.binding {
            write!(f, " {}", self.instance.objects[o.index()])?;
        }
        f.write_str(")")
    }
}

/// All bindings of every schema, in schema declaration order and then
/// lexicographic order of object indices (last parameter varies fastest).
pub fn ground_actions(domain: &Domain, instance: &Instance) -> Vec<GroundAction> {
    let n = instance.objects.len();
    let mut out = Vec::new();
    for (si, schema) in domain.schemas.iter().enumerate() {
        let arity = schema.parameters.len();
        if arity > 0 && n == 0 {
            continue;
        }
        let mut binding = vec![0u32; arity];
        loop {
            out.push(GroundAction::new(
                si,
                schema,
                binding.iter().map(|&o| ObjId(o)).collect(),
            ));
            // Odometer increment.
            let mut pos = arity;
            loop {
                if pos == 0 {
                    break;
                }
                pos -= 1;
                binding[pos] += 1;
                if (binding[pos] as usize) < n {
                    break;
                }
                binding[pos] = 0;
                if pos == 0 {
                    pos = usize::MAX;
                    break;
                }
            }
            if pos == usize::MAX || arity == 0 {
                break;
            }
        }
    }
    out
}

pub fn applicable(state: &State, action: &GroundAction) -> bool {
    state.contains_all(&action.precondition)
}

/// Unchecked `(s \ delete) ∪ add`.
fn apply_effects(state: &State, action: &GroundAction) -> State {
    let mut atoms: Vec<GroundAtom> = state
        .atoms
        .iter()
        .filter(|a| action.delete.binary_search(a).is_err())
        .cloned()
        .collect();
    atoms.extend(action.add.iter().cloned());
    State::new(atoms)
}

/// A grounded planning task: domain, instance, and the full ground action table.
#[derive(Debug, Clone)]
pub struct Task {
    pub domain: Arc<Domain>,
    pub instance: Instance,
    pub actions: Vec<GroundAction>,
    /// Actions whose static preconditions hold in the initial state. Static
    /// atoms never change, so no other action can ever become applicable.
    live: Vec<usize>,
}

impl Task {
    pub fn new(domain: Arc<Domain>, instance: Instance) -> Self {
        let actions = ground_actions(&domain, &instance);
        let mut fluent = vec![false; domain.predicates.len()];
        for s in &domain.schemas {
            for a in s.add.iter().chain(&s.delete) {
                fluent[a.pred.index()] = true;
            }
        }
        let init = State::new(instance.init.clone());
        let live = actions
            .iter()
            .enumerate()
            .filter(|(_, a)| {
                a.precondition.iter().all(|p| fluent[p.pred.index()] || init.contains(p))
            })
            .map(|(i, _)| i)
            .collect();
        Self { domain, instance, actions, live }
    }

    pub fn initial_state(&self) -> State {
        State::new(self.instance.init.clone())
    }

    pub fn is_goal(&self, state: &State) -> bool {
        is_goal(&self.instance, state)
    }

    /// `(s \ delete) ∪ add`, rejecting inapplicable actions.
    pub fn apply(&self, state: &State, action: usize) -> Result<State, GroundingError> {
        apply(&self.domain, &self.instance, state, &self.actions[action])
    }

    /// One entry per applicable ground action that changes the state, in
    /// ground-action order. Distinct actions reaching the same state are all
    /// kept; actions leaving `state` as it is (such as moving to the current
    /// room) are not transitions and are dropped. `state` must
    /// agree with the initial state on static atoms (true of every reachable
    /// state).
    pub fn successors(&self, state: &State) -> Vec<(usize, State)> {
        self.live
            .iter()
            .filter(|&&i| applicable(state, &self.actions[i]))
            .map(|&i| (i, apply_effects(state, &self.actions[i])))
            .filter(|(_, next)| next != state)
            .collect()
    }

    pub fn action_name(&self, action: usize) -> String {
        self.actions[action].display(&self.domain, &self.instance).to_string()
    }
}

pub fn apply(
    domain: &Domain,
    instance: &Instance,
    state: &State,
    action: &GroundAction,
) -> Result<State, GroundingError> {
    if let Some(missing) = action.precondition.iter().find(|p| !state.contains(p)) {
        return Err(GroundingError::NotApplicable {
            action: action.display(domain, instance).to_string(),
            missing: missing.display(domain, &instance.objects).to_string(),
        });
    }
    Ok(apply_effects(state, action))
}

pub fn is_goal(instance: &Instance, state: &State) -> bool {
    state.contains_all(&instance.goal)
}
