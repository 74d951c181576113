//! Lifted STRIPS domain and instance representations.

use std::fmt;

use serde::{Deserialize, Serialize};
use smallvec::SmallVec;

/// Index of a predicate within its [`Domain`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PredId(pub u32);

impl PredId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Index of an object within its [`Instance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ObjId(pub u32);

impl ObjId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

/// Where a predicate symbol came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Origin {
    /// Declared in the domain file (types compile to base unary predicates).
    Base,
    /// Decorated copy whose denotation is the goal description.
    GoalVersion,
    /// Computed by rule from other atoms (closure, composition).
    Derived,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Predicate {
    pub name: String,
    pub arity: usize,
    pub origin: Origin,
}

impl Predicate {
    pub fn base(name: impl Into<String>, arity: usize) -> Self {
        Self { name: name.into(), arity, origin: Origin::Base }
    }
}

/// Argument of a lifted atom.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Term {
    /// Index into the schema's parameter list.
    Var(usize),
    /// Index into the domain's constant list.
    Const(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct LiftedAtom {
    pub pred: PredId,
    pub args: Vec<Term>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSchema {
    pub name: String,
    pub parameters: Vec<String>,
    pub precondition: Vec<LiftedAtom>,
    pub add: Vec<LiftedAtom>,
    pub delete: Vec<LiftedAtom>,
}

/// A declared type, compiled to the unary predicate `pred`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TypeDecl {
    pub pred: PredId,
    pub parent: Option<PredId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Domain {
    pub name: String,
    pub predicates: Vec<Predicate>,
    pub types: Vec<TypeDecl>,
    pub constants: Vec<String>,
    /// Declared type of each constant, parallel to `constants`.
    pub constant_types: Vec<Option<PredId>>,
    pub schemas: Vec<ActionSchema>,
}

impl Domain {
    pub fn predicate(&self, id: PredId) -> &Predicate {
        &self.predicates[id.index()]
    }

    pub fn predicate_id(&self, name: &str) -> Option<PredId> {
        self.predicates.iter().position(|p| p.name == name).map(|i| PredId(i as u32))
    }

    pub fn schema(&self, name: &str) -> Option<&ActionSchema> {
        self.schemas.iter().find(|s| s.name == name)
    }

    /// `name/arity` for every predicate, in id order. Checkpoints and datasets
    /// pin this so they cannot be loaded against a different domain.
    pub fn signature(&self) -> Vec<(String, usize)> {
        self.predicates.iter().map(|p| (p.name.clone(), p.arity)).collect()
    }

    /// The type predicate and all its ancestors.
    pub fn type_closure(&self, ty: PredId) -> Vec<PredId> {
        let mut out = vec![ty];
        let mut cur = ty;
        while let Some(parent) = self.types.iter().find(|t| t.pred == cur).and_then(|t| t.parent) {
            if out.contains(&parent) {
                break;
            }
            out.push(parent);
            cur = parent;
        }
        out
    }

    pub fn base_predicates(&self) -> impl Iterator<Item = (PredId, &Predicate)> {
        self.predicates
            .iter()
            .enumerate()
            .filter(|(_, p)| p.origin == Origin::Base)
            .map(|(i, p)| (PredId(i as u32), p))
    }
}

/// A ground atom `p(o_1, ..., o_m)`. Ordering is by predicate id, then arguments.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroundAtom {
    pub pred: PredId,
    pub args: SmallVec<[ObjId; 3]>,
}

impl GroundAtom {
    pub fn new(pred: PredId, args: impl IntoIterator<Item = ObjId>) -> Self {
        Self { pred, args: args.into_iter().collect() }
    }

    /// Renders as `(name arg...)` using the given name tables.
    pub fn display<'a>(&'a self, domain: &'a Domain, objects: &'a [String]) -> AtomDisplay<'a> {
        AtomDisplay { atom: self, domain, objects }
    }
}

pub struct AtomDisplay<'a> {
    atom: &'a GroundAtom,
    domain: &'a Domain,
    objects: &'a [String],
}

impl fmt::Display for AtomDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = self
            .domain
            .predicates
            .get(self.atom.pred.index())
            .map(|p| p.name.as_str())
            .unwrap_or("?");
        write!(f, "({name}")?;
        for a in &self.atom.args {
            let obj = self.objects.get(a.index()).map(String::as_str).unwrap_or("?");
            write!(f, " {obj}")?;
        }
        f.write_str(")")
    }
}

/// A problem `⟨O, Init, Goal⟩` over a domain. `init` and `goal` are kept
/// sorted and duplicate-free.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    pub name: String,
    pub domain_name: String,
    pub objects: Vec<String>,
    pub init: Vec<GroundAtom>,
    pub goal: Vec<GroundAtom>,
}

impl Instance {
    pub fn object_id(&self, name: &str) -> Option<ObjId> {
        self.objects.iter().position(|o| o == name).map(|i| ObjId(i as u32))
    }

    pub fn num_objects(&self) -> usize {
        self.objects.len()
    }

    /// Parses a ground atom written as `(pred obj...)` or `pred(obj,...)`
    /// against this instance's names. Used by tests and the CLI.
    pub fn atom(&self, domain: &Domain, text: &str) -> Option<GroundAtom> {
        let cleaned: String = text
            .chars()
            .map(|c| if c == '(' || c == ')' || c == ',' { ' ' } else { c })
            .collect();
        let mut parts = cleaned.split_whitespace();
        let pred = domain.predicate_id(&parts.next()?.to_lowercase())?;
        let args = parts
            .map(|p| self.object_id(&p.to_lowercase()))
            .collect::<Option<SmallVec<_>>>()?;
        Some(GroundAtom { pred, args })
    }
}

/// Sorts and dedups an atom list in place.
pub(crate) fn canonicalize_atoms(atoms: &mut Vec<GroundAtom>) {
    atoms.sort_unstable();
    atoms.dedup();
}
