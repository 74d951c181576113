//! PDDL pretty-printing. Output reparses to a structurally equal value;
//! types are kept in `:types` while type preconditions and type atoms are
//! printed explicitly.

use std::fmt::{self, Write};

use super::model::*;

fn lifted(out: &mut String, domain: &Domain, schema: &ActionSchema, atom: &LiftedAtom) {
    out.push('(');
    out.push_str(&domain.predicate(atom.pred).name);
    for t in &atom.args {
        out.push(' ');
        match *t {
            Term::Var(i) => out.push_str(&schema.parameters[i]),
            Term::Const(i) => out.push_str(&domain.constants[i]),
        }
    }
    out.push(')');
}

pub fn domain_to_pddl(domain: &Domain) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (domain {})", domain.name);
    if domain.types.is_empty() {
        out.push_str("  (:requirements :strips)\n");
    } else {
        out.push_str("  (:requirements :strips :typing)\n  (:types");
        for t in &domain.types {
            let _ = write!(out, " {}", domain.predicate(t.pred).name);
            match t.parent {
                Some(p) => {
                    let _ = write!(out, " - {}", domain.predicate(p).name);
                }
                None => out.push_str(" - object"),
            }
        }
        out.push_str(")\n");
    }
    if !domain.constants.is_empty() {
        out.push_str("  (:constants");
        for (c, ty) in domain.constants.iter().zip(&domain.constant_types) {
            let _ = write!(out, " {c}");
            if let Some(ty) = ty {
                let _ = write!(out, " - {}", domain.predicate(*ty).name);
            }
        }
        out.push_str(")\n");
    }
    out.push_str("  (:predicates");
    for p in &domain.predicates {
        let _ = write!(out, "\n    ({}", p.name);
        for i in 0..p.arity {
            let _ = write!(out, " ?x{i}");
        }
        out.push(')');
    }
    out.push_str(")\n");
    for s in &domain.schemas {
        let _ = writeln!(out, "  (:action {}", s.name);
        let _ = writeln!(out, "    :parameters ({})", s.parameters.join(" "));
        out.push_str("    :precondition (and");
        for a in &s.precondition {
            out.push(' ');
            lifted(&mut out, domain, s, a);
        }
        out.push_str(")\n    :effect (and");
        for a in &s.add {
            out.push(' ');
            lifted(&mut out, domain, s, a);
        }
        for a in &s.delete {
            out.push_str(" (not ");
            lifted(&mut out, domain, s, a);
            out.push(')');
        }
        out.push_str("))\n");
    }
    out.push_str(")\n");
    out
}

pub fn instance_to_pddl(domain: &Domain, instance: &Instance) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "(define (problem {})", instance.name);
    let _ = writeln!(out, "  (:domain {})", instance.domain_name);
    out.push_str("  (:objects");
    for o in instance.objects.iter().skip(domain.constants.len()) {
        let _ = write!(out, " {o}");
    }
    out.push_str(")\n  (:init");
    for a in &instance.init {
        let _ = write!(out, "\n    {}", a.display(domain, &instance.objects));
    }
    out.push_str(")\n  (:goal (and");
    for a in &instance.goal {
        let _ = write!(out, "\n    {}", a.display(domain, &instance.objects));
    }
    out.push_str(")))\n");
    out
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&domain_to_pddl(self))
    }
}
