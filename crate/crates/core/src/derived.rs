//! Derived atoms: goal versions, transitive closures and role compositions.
//!
//! Derived atoms are never produced by action effects. An [`Augmenter`]
//! strips them from a state and recomputes them from the base atoms, in the
//! order goal versions, closures, compositions, so a composition may refer
//! to goal-version or closure predicates.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grounding::{GroundAtom, State};
use crate::pddl::{Domain, ObjId, Origin, PredId, Predicate};

/// Suffix marking the goal-version copy of a predicate.
pub const GOAL_SUFFIX: &str = "@";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DerivedError {
    #[error("unknown predicate {0}")]
    UnknownPredicate(String),
    #[error("predicate {name} has arity {arity}, {expected} requires a binary predicate")]
    NotBinary { name: String, arity: usize, expected: &'static str },
    #[error("composition {0} needs at least two predicates")]
    ShortChain(String),
    #[error("derived predicate {0} is already declared")]
    Duplicate(String),
    #[error("unknown augmentation preset {0}")]
    UnknownPreset(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Closure {
    pub predicate: String,
    pub derived: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Composition {
    /// Binary predicates joined left to right.
    pub chain: Vec<String>,
    pub derived: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentationSpec {
    #[serde(default)]
    pub goal_versions: bool,
    #[serde(default)]
    pub closures: Vec<Closure>,
    #[serde(default)]
    pub compositions: Vec<Composition>,
}

fn closure(predicate: &str, derived: &str) -> Closure {
    Closure { predicate: predicate.into(), derived: derived.into() }
}

fn composition(chain: &[&str]) -> Composition {
    Composition { chain: chain.iter().map(|s| s.to_string()).collect(), derived: chain.join(".") }
}

impl AugmentationSpec {
    pub const PRESETS: [&'static str; 4] = ["goal-only", "blocks-above", "logistics-4comp", "spanner-linkplus"];

    /// Goal versions only.
    pub fn goal_only() -> Self {
        Self { goal_versions: true, ..Self::default() }
    }

    pub fn preset(name: &str) -> Result<Self, DerivedError> {
        let mut spec = Self::goal_only();
        match name {
            "none" => return Ok(Self::default()),
            "goal-only" => {}
            "blocks-above" => spec.closures.push(closure("on", "above")),
            "logistics-4comp" => {
                spec.compositions = vec![
                    composition(&["at", "in-city"]),
                    composition(&["at@", "in-city"]),
                    composition(&["in", "at"]),
                    composition(&["in", "at", "in-city"]),
                ]
            }
            "spanner-linkplus" => spec.closures.push(closure("link", "link+")),
            other => return Err(DerivedError::UnknownPreset(other.into())),
        }
        Ok(spec)
    }
}

/// Returns a copy of `domain` with the derived predicates of `spec` appended.
/// Goal versions are added for every base predicate that is not a type.
pub fn augment_domain(domain: &Domain, spec: &AugmentationSpec) -> Result<Domain, DerivedError> {
    Ok(Augmenter::new(domain, spec)?.domain)
}

#[derive(Debug, Clone)]
enum Rule {
    Closure { base: PredId, derived: PredId },
    Compose { chain: Vec<PredId>, derived: PredId },
}

/// Compiled augmentation for one domain.
#[derive(Debug, Clone)]
pub struct Augmenter {
    domain: Domain,
    /// Goal-version predicate per base predicate id.
    goal_version: Vec<Option<PredId>>,
    rules: Vec<Rule>,
}

impl Augmenter {
    pub fn new(base: &Domain, spec: &AugmentationSpec) -> Result<Self, DerivedError> {
        let mut domain = base.clone();
        let mut goal_version = vec![None; base.predicates.len()];
        let declare = |domain: &mut Domain, name: String, arity: usize, origin: Origin| {
            if domain.predicate_id(&name).is_some() {
                return Err(DerivedError::Duplicate(name));
            }
            domain.predicates.push(Predicate { name, arity, origin });
            Ok(PredId(domain.predicates.len() as u32 - 1))
        };
        if spec.goal_versions {
            let types: Vec<PredId> = base.types.iter().map(|t| t.pred).collect();
            for (id, p) in base.base_predicates() {
                if !types.contains(&id) {
                    let name = format!("{}{GOAL_SUFFIX}", p.name);
                    goal_version[id.index()] = Some(declare(&mut domain, name, p.arity, Origin::GoalVersion)?);
                }
            }
        }
        let binary = |domain: &Domain, name: &str, expected: &'static str| {
            let id = domain.predicate_id(name).ok_or_else(|| DerivedError::UnknownPredicate(name.into()))?;
            match domain.predicate(id).arity {
                2 => Ok(id),
                arity => Err(DerivedError::NotBinary { name: name.into(), arity, expected }),
            }
        };
        let mut rules = Vec::new();
        for c in &spec.closures {
            let base = binary(&domain, &c.predicate, "transitive closure")?;
            let derived = declare(&mut domain, c.derived.clone(), 2, Origin::Derived)?;
            rules.push(Rule::Closure { base, derived });
        }
        for c in &spec.compositions {
            if c.chain.len() < 2 {
                return Err(DerivedError::ShortChain(c.derived.clone()));
            }
            let chain = c
                .chain
                .iter()
                .map(|n| binary(&domain, n, "role composition"))
                .collect::<Result<Vec<_>, _>>()?;
            let derived = declare(&mut domain, c.derived.clone(), 2, Origin::Derived)?;
            rules.push(Rule::Compose { chain, derived });
        }
        Ok(Self { domain, goal_version, rules })
    }

    /// The augmented domain.
    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Recomputes all derived atoms of `state` for an instance with `goal`.
    pub fn augment(&self, state: &State, goal: &[GroundAtom]) -> State {
        let mut out = state.filtered(|p| self.domain.predicate(p).origin == Origin::Base);
        out.extend(
            goal.iter()
                .filter_map(|a| Some(GroundAtom { pred: self.goal_version.get(a.pred.index()).copied()??, args: a.args.clone() })),
        );
        for rule in &self.rules {
            let new = match rule {
                Rule::Closure { base, derived } => closure_atoms(&out, *base, *derived),
                Rule::Compose { chain, derived } => compose_atoms(&out, chain, *derived),
            };
            out.extend(new);
        }
        out
    }
}

fn pairs(state: &State, p: PredId) -> impl Iterator<Item = (ObjId, ObjId)> + '_ {
    state.atoms_of(p).iter().map(|a| (a.args[0], a.args[1]))
}

fn closure_atoms(state: &State, p: PredId, derived: PredId) -> Vec<GroundAtom> {
    let mut succ: std::collections::BTreeMap<ObjId, Vec<ObjId>> = Default::default();
    for (x, y) in pairs(state, p) {
        succ.entry(x).or_default().push(y);
    }
    let mut out = Vec::new();
    for &x in succ.keys() {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<ObjId> = succ[&x].clone();
        while let Some(y) = stack.pop() {
            if seen.insert(y) {
                stack.extend(succ.get(&y).into_iter().flatten().copied());
            }
        }
        out.extend(seen.into_iter().map(|y| GroundAtom::new(derived, [x, y])));
    }
    out
}

fn compose_atoms(state: &State, chain: &[PredId], derived: PredId) -> Vec<GroundAtom> {
    let mut rel: BTreeSet<(ObjId, ObjId)> = pairs(state, chain[0]).collect();
    for &p in &chain[1..] {
        let mut next = BTreeSet::new();
        for (y, z) in pairs(state, p) {
            next.extend(rel.iter().filter(|&&(_, m)| m == y).map(|&(x, _)| (x, z)));
        }
        rel = next;
    }
    rel.into_iter().map(|(x, z)| GroundAtom::new(derived, [x, z])).collect()
}

fn check_binary(domain: &Domain, p: PredId, expected: &'static str) -> Result<(), DerivedError> {
    let pred = domain.predicates.get(p.index()).ok_or_else(|| DerivedError::UnknownPredicate(format!("#{}", p.0)))?;
    if pred.arity != 2 {
        return Err(DerivedError::NotBinary { name: pred.name.clone(), arity: pred.arity, expected });
    }
    Ok(())
}

/// Adds `p@(o...)` for every goal atom `p(o...)`, using the goal-version
/// predicates of an augmented domain. Predicates without a goal version are
/// skipped.
pub fn add_goal_versions(domain: &Domain, state: &State, goal: &[GroundAtom]) -> State {
    let mut out = state.clone();
    out.extend(goal.iter().filter_map(|a| {
        let name = format!("{}{GOAL_SUFFIX}", domain.predicate(a.pred).name);
        let pred = domain.predicate_id(&name)?;
        Some(GroundAtom { pred, args: a.args.clone() })
    }));
    out
}

/// Adds `p_plus(x, y)` for every pair joined by a directed `p`-path of
/// length at least one.
pub fn transitive_closure(domain: &Domain, state: &State, p: PredId, p_plus: PredId) -> Result<State, DerivedError> {
    check_binary(domain, p, "transitive closure")?;
    check_binary(domain, p_plus, "transitive closure")?;
    let mut out = state.clone();
    out.extend(closure_atoms(state, p, p_plus));
    Ok(out)
}

/// Adds `r(x, z)` for every `x, z` linked through the relational join of
/// `chain`.
pub fn compose_roles(domain: &Domain, state: &State, chain: &[PredId], r: PredId) -> Result<State, DerivedError> {
    if chain.len() < 2 {
        return Err(DerivedError::ShortChain(domain.predicates.get(r.index()).map_or_else(String::new, |p| p.name.clone())));
    }
    for &p in chain.iter().chain([&r]) {
        check_binary(domain, p, "role composition")?;
    }
    let mut out = state.clone();
    out.extend(compose_atoms(state, chain, r));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pddl::parse_instance;
    use crate::{domains, generators};
    use proptest::prelude::*;

    fn rel_domain() -> Domain {
        let text = "(define (domain rel) (:requirements :strips)
            (:predicates (e ?x ?y) (f ?x ?y) (g ?x ?y) (u ?x))
            (:action noop :parameters () :precondition () :effect ()))";
        crate::pddl::parse_domain(text).unwrap()
    }

    fn rel_state(pred: PredId, edges: &[(u32, u32)]) -> State {
        State::new(edges.iter().map(|&(a, b)| GroundAtom::new(pred, [ObjId(a), ObjId(b)])).collect())
    }

    fn derived_pairs(state: &State, p: PredId) -> BTreeSet<(u32, u32)> {
        state.atoms_of(p).iter().map(|a| (a.args[0].0, a.args[1].0)).collect()
    }

    /// Floyd–Warshall reachability over paths of length ≥ 1.
    fn floyd_warshall(n: usize, edges: &[(u32, u32)]) -> BTreeSet<(u32, u32)> {
        let mut r = vec![vec![false; n]; n];
        for &(a, b) in edges {
            r[a as usize][b as usize] = true;
        }
        for k in 0..n {
            for i in 0..n {
                for j in 0..n {
                    r[i][j] = r[i][j] || (r[i][k] && r[k][j]);
                }
            }
        }
        (0..n).flat_map(|i| (0..n).map(move |j| (i, j))).filter(|&(i, j)| r[i][j]).map(|(i, j)| (i as u32, j as u32)).collect()
    }

    fn nested_loop_join(a: &[(u32, u32)], b: &[(u32, u32)]) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        for &(x, y) in a {
            for &(y2, z) in b {
                if y == y2 {
                    out.push((x, z));
                }
            }
        }
        out
    }

    #[test]
    fn closure_examples() {
        let d = rel_domain();
        let (e, f) = (d.predicate_id("e").unwrap(), d.predicate_id("f").unwrap());
        let s = transitive_closure(&d, &rel_state(e, &[(0, 1), (1, 2)]), e, f).unwrap();
        assert_eq!(derived_pairs(&s, f), BTreeSet::from([(0, 1), (1, 2), (0, 2)]));
        let empty = transitive_closure(&d, &State::default(), e, f).unwrap();
        assert!(empty.is_empty());
        let u = d.predicate_id("u").unwrap();
        assert!(matches!(transitive_closure(&d, &s, u, f), Err(DerivedError::NotBinary { arity: 1, .. })));
        // A cycle yields reflexive pairs.
        let cyc = transitive_closure(&d, &rel_state(e, &[(0, 1), (1, 0)]), e, f).unwrap();
        assert!(derived_pairs(&cyc, f).contains(&(0, 0)));
    }

    #[test]
    fn composition_examples() {
        let d = rel_domain();
        let [e, f, g] = ["e", "f", "g"].map(|n| d.predicate_id(n).unwrap());
        let mut s = rel_state(e, &[(0, 1)]);
        s.extend(rel_state(f, &[(1, 3)]).into_atoms());
        let out = compose_roles(&d, &s, &[e, f], g).unwrap();
        assert_eq!(derived_pairs(&out, g), BTreeSet::from([(0, 3)]));

        let mut disjoint = rel_state(e, &[(0, 1)]);
        disjoint.extend(rel_state(f, &[(2, 3)]).into_atoms());
        assert!(compose_roles(&d, &disjoint, &[e, f], g).unwrap().atoms_of(g).is_empty());
        assert!(matches!(compose_roles(&d, &s, &[e], g), Err(DerivedError::ShortChain(_))));
    }

    #[test]
    fn chain_of_six_gives_distance_to_exit() {
        let d = rel_domain();
        let (e, f) = (d.predicate_id("e").unwrap(), d.predicate_id("f").unwrap());
        let n = 6;
        let chain: Vec<(u32, u32)> = (0..n - 1).map(|i| (i, i + 1)).collect();
        let s = transitive_closure(&d, &rel_state(e, &chain), e, f).unwrap();
        let plus = derived_pairs(&s, f);
        assert_eq!(plus.len(), 15);
        assert_eq!(plus.len(), (n * (n - 1) / 2) as usize);
        for c in 0..n {
            let dist2exit = plus.iter().filter(|&&(x, _)| x == c).count();
            // BFS along the chain from c to its last node.
            let mut bfs = 0;
            let mut cur = c;
            while let Some(&(_, next)) = chain.iter().find(|&&(a, _)| a == cur) {
                cur = next;
                bfs += 1;
            }
            assert_eq!(dist2exit, bfs);
        }
    }

    #[test]
    fn augment_domain_counts() {
        let blocks = domains::load("blocks").unwrap();
        let aug = augment_domain(&blocks, &AugmentationSpec::goal_only()).unwrap();
        assert_eq!(aug.predicates.len(), 5 + 5);
        assert!(aug.predicate_id("on@").is_some());
        let above = augment_domain(&blocks, &AugmentationSpec::preset("blocks-above").unwrap()).unwrap();
        assert_eq!(above.predicates.len(), 11);
        assert_eq!(above.schemas, blocks.schemas);

        let logistics = domains::load("logistics").unwrap();
        let aug = augment_domain(&logistics, &AugmentationSpec::preset("logistics-4comp").unwrap()).unwrap();
        let goal_versions: Vec<&str> = aug
            .predicates
            .iter()
            .filter(|p| p.origin == Origin::GoalVersion)
            .map(|p| p.name.as_str())
            .collect();
        assert_eq!(goal_versions, ["in-city@", "at@", "in@"]);
        let derived: Vec<&str> =
            aug.predicates.iter().filter(|p| p.origin == Origin::Derived).map(|p| p.name.as_str()).collect();
        assert_eq!(derived, ["at.in-city", "at@.in-city", "in.at", "in.at.in-city"]);

        let bad = AugmentationSpec { closures: vec![closure("clear", "c+")], ..Default::default() };
        assert!(matches!(augment_domain(&blocks, &bad), Err(DerivedError::NotBinary { .. })));
        let dangling = AugmentationSpec { closures: vec![closure("link", "l+")], ..Default::default() };
        assert_eq!(augment_domain(&blocks, &dangling), Err(DerivedError::UnknownPredicate("link".into())));
        assert!(AugmentationSpec::preset("nope").is_err());
    }

    #[test]
    fn goal_versions_follow_goal() {
        let d = domains::load("blocks").unwrap();
        let aug = Augmenter::new(&d, &AugmentationSpec::goal_only()).unwrap();
        let i = parse_instance(&generators::blocks(3, 4), &d).unwrap();
        let s = aug.augment(&State::new(i.init.clone()), &i.goal);
        let on_at = aug.domain().predicate_id("on@").unwrap();
        for g in &i.goal {
            let decorated = GroundAtom { pred: aug.domain().predicate_id(&format!("{}@", d.predicate(g.pred).name)).unwrap(), args: g.args.clone() };
            assert!(s.contains(&decorated));
        }
        assert_eq!(s.len(), i.init.len() + i.goal.len());
        assert_eq!(s, add_goal_versions(aug.domain(), &State::new(i.init.clone()), &i.goal));
        assert_eq!(aug.augment(&State::new(i.init.clone()), &[]).atoms_of(on_at).len(), 0);
    }

    #[test]
    fn logistics_compositions_locate_packages() {
        let d = domains::load("logistics").unwrap();
        let aug = Augmenter::new(&d, &AugmentationSpec::preset("logistics-4comp").unwrap()).unwrap();
        let i = parse_instance(&generators::logistics(2, 2, 2, 1, 3), &d).unwrap();
        let s = aug.augment(&State::new(i.init.clone()), &i.goal);
        let ad = aug.domain();
        let p = |n: &str| ad.predicate_id(n).unwrap();
        // Every package and vehicle is located in exactly one city.
        let located: BTreeSet<ObjId> = s.atoms_of(p("at")).iter().map(|a| a.args[0]).collect();
        for x in &located {
            assert_eq!(s.atoms_of(p("at.in-city")).iter().filter(|a| a.args[0] == *x).count(), 1);
        }
        assert_eq!(s.atoms_of(p("at@.in-city")).len(), i.goal.len());
    }

    fn arb_graph() -> impl Strategy<Value = (usize, Vec<(u32, u32)>)> {
        (1usize..=12).prop_flat_map(|n| (Just(n), prop::collection::vec((0..n as u32, 0..n as u32), 0..30)))
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn closure_matches_floyd_warshall((n, edges) in arb_graph()) {
            let d = rel_domain();
            let (e, f) = (d.predicate_id("e").unwrap(), d.predicate_id("f").unwrap());
            let s = transitive_closure(&d, &rel_state(e, &edges), e, f).unwrap();
            prop_assert_eq!(derived_pairs(&s, f), floyd_warshall(n, &edges));
            prop_assert_eq!(derived_pairs(&s, e), edges.iter().copied().collect::<BTreeSet<_>>());
        }

        #[test]
        fn composition_matches_join(
            (_, a) in arb_graph(), (_, b) in arb_graph(), (_, c) in arb_graph()
        ) {
            let d = rel_domain();
            let [e, f, g] = ["e", "f", "g"].map(|n| d.predicate_id(n).unwrap());
            let u = d.predicate_id("u").unwrap();
            let mut s = rel_state(e, &a);
            s.extend(rel_state(f, &b).into_atoms());
            s.extend(rel_state(g, &c).into_atoms());
            let mut d2 = d.clone();
            d2.predicates.push(Predicate { name: "r".into(), arity: 2, origin: Origin::Derived });
            let r = d2.predicate_id("r").unwrap();
            let out = compose_roles(&d2, &s, &[e, f, g], r).unwrap();
            let oracle: BTreeSet<(u32, u32)> = nested_loop_join(&nested_loop_join(&a, &b), &c).into_iter().collect();
            prop_assert_eq!(derived_pairs(&out, r), oracle);
            prop_assert!(compose_roles(&d2, &s, &[e, u], r).is_err());
        }

        #[test]
        fn augmentation_is_idempotent_and_monotone(n in 2usize..6, seed in 0u64..500) {
            let d = domains::load("blocks").unwrap();
            let aug = Augmenter::new(&d, &AugmentationSpec::preset("blocks-above").unwrap()).unwrap();
            let i = parse_instance(&generators::blocks(n, seed), &d).unwrap();
            let base = State::new(i.init.clone());
            let once = aug.augment(&base, &i.goal);
            prop_assert_eq!(&aug.augment(&once, &i.goal), &once);
            prop_assert!(once.contains_all(base.atoms()));
            prop_assert_eq!(&once.filtered(|p| p.index() < d.predicates.len()), &base);

            let on = d.predicate_id("on").unwrap();
            let above = aug.domain().predicate_id("above").unwrap();
            let fx = transitive_closure(aug.domain(), &base, on, above).unwrap();
            prop_assert_eq!(&transitive_closure(aug.domain(), &fx, on, above).unwrap(), &fx);
        }
    }

    #[test]
    fn chain_closure_growth_is_quadratic() {
        let d = domains::load("spanner").unwrap();
        let aug = Augmenter::new(&d, &AugmentationSpec { closures: vec![closure("link", "link+")], ..Default::default() }).unwrap();
        for n in [2usize, 5, 9] {
            let i = parse_instance(&generators::spanner(n, 1, 1, 0), &d).unwrap();
            let base = State::new(i.init.clone());
            let out = aug.augment(&base, &i.goal);
            assert_eq!(out.len() - base.len(), n * (n - 1) / 2);
        }
    }
}
