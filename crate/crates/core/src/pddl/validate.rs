use std::collections::HashSet;

use super::error::{Diagnostic, ErrorKind};
use super::model::*;

fn diag(out: &mut Vec<Diagnostic>, location: String, kind: ErrorKind, message: String) {
    out.push(Diagnostic { location, kind, message });
}

fn check_domain(domain: &Domain, out: &mut Vec<Diagnostic>) {
    let mut names = HashSet::new();
    for (i, p) in domain.predicates.iter().enumerate() {
        if !names.insert(p.name.as_str()) {
            diag(out, format!("domain.predicates[{i}]"), ErrorKind::Duplicate, format!("predicate {} declared twice", p.name));
        }
    }
    for (i, t) in domain.types.iter().enumerate() {
        for id in std::iter::once(t.pred).chain(t.parent) {
            match domain.predicates.get(id.index()) {
                Some(p) if p.arity == 1 => {}
                _ => diag(out, format!("domain.types[{i}]"), ErrorKind::UnknownType, "type is not a unary predicate".into()),
            }
        }
    }
    for s in &domain.schemas {
        let sections = [("precondition", &s.precondition), ("add", &s.add), ("delete", &s.delete)];
        for (section, atoms) in sections {
            for (j, a) in atoms.iter().enumerate() {
                let loc = format!("domain.{}.{section}[{j}]", s.name);
                let Some(p) = domain.predicates.get(a.pred.index()) else {
                    diag(out, loc, ErrorKind::UnknownPredicate, format!("predicate id {} is not declared", a.pred.0));
                    continue;
                };
                if p.arity != a.args.len() {
                    diag(out, loc.clone(), ErrorKind::ArityMismatch, format!("{} has arity {}, given {} arguments", p.name, p.arity, a.args.len()));
                }
                for t in &a.args {
                    match *t {
                        Term::Var(v) if v >= s.parameters.len() => {
                            diag(out, loc.clone(), ErrorKind::UnboundVariable, format!("variable #{v} is not a parameter"))
                        }
                        Term::Const(c) if c >= domain.constants.len() => {
                            diag(out, loc.clone(), ErrorKind::UnknownObject, format!("constant #{c} is not declared"))
                        }
                        _ => {}
                    }
                }
            }
        }
        for a in &s.add {
            if s.delete.contains(a) {
                diag(out, format!("domain.{}.effect", s.name), ErrorKind::ConflictingEffect, "atom is both added and deleted".into());
            }
        }
    }
}

fn check_atoms(domain: &Domain, instance: &Instance, section: &str, atoms: &[GroundAtom], out: &mut Vec<Diagnostic>) {
    for (j, a) in atoms.iter().enumerate() {
        let loc = format!("instance.{section}[{j}]");
        let Some(p) = domain.predicates.get(a.pred.index()) else {
            diag(out, loc, ErrorKind::UnknownPredicate, format!("predicate id {} is not declared", a.pred.0));
            continue;
        };
        if p.arity != a.args.len() {
            diag(out, loc.clone(), ErrorKind::ArityMismatch, format!("{} has arity {}, given {} arguments", p.name, p.arity, a.args.len()));
        }
        if let Some(o) = a.args.iter().find(|o| o.index() >= instance.objects.len()) {
            diag(out, loc, ErrorKind::UnknownObject, format!("object id {} is not declared", o.0));
        }
    }
}

/// Checks every structural invariant of a domain/instance pair. An empty
/// result means the pair is well formed.
pub fn validate(domain: &Domain, instance: &Instance) -> Vec<Diagnostic> {
    let mut out = Vec::new();
    check_domain(domain, &mut out);
    if instance.domain_name != domain.name {
        diag(&mut out, "instance.domain".into(), ErrorKind::DomainMismatch, format!("instance is for domain {}", instance.domain_name));
    }
    let mut seen = HashSet::new();
    for (i, o) in instance.objects.iter().enumerate() {
        if !seen.insert(o.as_str()) {
            diag(&mut out, format!("instance.objects[{i}]"), ErrorKind::Duplicate, format!("object {o} declared twice"));
        }
    }
    check_atoms(domain, instance, "init", &instance.init, &mut out);
    check_atoms(domain, instance, "goal", &instance.goal, &mut out);
    out
}
