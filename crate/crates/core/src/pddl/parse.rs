//! Domain and problem parsers for positive STRIPS with optional typing.
//!
//! Types are compiled away: every declared type becomes a unary base
//! predicate, typed action parameters gain a type precondition, and typed
//! objects gain init atoms for their type and all its ancestors.

use std::collections::{HashMap, HashSet};

use smallvec::SmallVec;

use super::error::{ErrorKind, ParseError};
use super::model::*;
use super::sexpr::{self, Pos, SExpr};

const SUPPORTED_REQUIREMENTS: &[&str] = &[":strips", ":typing"];

type Result<T> = std::result::Result<T, ParseError>;

fn err<T>(pos: Pos, kind: ErrorKind, msg: impl Into<String>) -> Result<T> {
    Err(ParseError::new(pos, kind, msg))
}

fn expect_list<'a>(e: &'a SExpr, what: &str) -> Result<&'a [SExpr]> {
    e.as_list()
        .ok_or_else(|| ParseError::new(e.pos(), ErrorKind::Syntax, format!("expected {what}")))
}

fn expect_symbol<'a>(e: &'a SExpr, what: &str) -> Result<&'a str> {
    e.as_symbol()
        .ok_or_else(|| ParseError::new(e.pos(), ErrorKind::Syntax, format!("expected {what}")))
}

fn is_identifier(s: &str) -> bool {
    !s.is_empty() && !s.starts_with(['?', ':', '-'])
}

/// Splits the header `(define (<kw> NAME) sections...)`.
fn split_define<'a>(root: &'a SExpr, keyword: &str) -> Result<(String, &'a [SExpr])> {
    let items = expect_list(root, "(define ...)")?;
    match items.first().and_then(SExpr::as_symbol) {
        Some("define") => {}
        _ => return err(root.pos(), ErrorKind::Syntax, "expected (define ...)"),
    }
    let header = items
        .get(1)
        .ok_or_else(|| ParseError::new(root.pos(), ErrorKind::Syntax, format!("missing ({keyword} NAME)")))?;
    let h = expect_list(header, &format!("({keyword} NAME)"))?;
    if h.len() != 2 || h[0].as_symbol() != Some(keyword) {
        return err(header.pos(), ErrorKind::Syntax, format!("expected ({keyword} NAME)"));
    }
    let name = expect_symbol(&h[1], "a name")?.to_string();
    Ok((name, &items[2..]))
}

/// A name, where it appears, and its declared type if any.
type TypedName = (String, Pos, Option<(String, Pos)>);

/// `a b - t c` → [(a, t), (b, t), (c, None)]
fn typed_list(items: &[SExpr]) -> Result<Vec<TypedName>> {
    let mut out = Vec::new();
    let mut pending: Vec<(String, Pos)> = Vec::new();
    let mut i = 0;
    while i < items.len() {
        let item = &items[i];
        match item {
            SExpr::Symbol(s, p) if s == "-" => {
                let ty = items.get(i + 1).ok_or_else(|| {
                    ParseError::new(*p, ErrorKind::Syntax, "missing type after '-'")
                })?;
                let ty = match ty {
                    SExpr::Symbol(t, tp) => (t.clone(), *tp),
                    SExpr::List(..) => {
                        return err(ty.pos(), ErrorKind::Unsupported, "'either' types are not supported")
                    }
                };
                if pending.is_empty() {
                    return err(*p, ErrorKind::Syntax, "type annotation without names");
                }
                for (n, np) in pending.drain(..) {
                    out.push((n, np, Some(ty.clone())));
                }
                i += 2;
            }
            SExpr::Symbol(s, p) => {
                pending.push((s.clone(), *p));
                i += 1;
            }
            SExpr::List(..) => return err(item.pos(), ErrorKind::Syntax, "expected a name"),
        }
    }
    out.extend(pending.into_iter().map(|(n, p)| (n, p, None)));
    Ok(out)
}

fn check_requirements(items: &[SExpr]) -> Result<()> {
    for r in items {
        let flag = expect_symbol(r, "a requirement flag")?;
        if !SUPPORTED_REQUIREMENTS.contains(&flag) {
            return err(r.pos(), ErrorKind::UnsupportedRequirement, format!("requirement {flag} is not supported"));
        }
    }
    Ok(())
}

/// Type hierarchy: type name → parent (None for children of `object`).
#[derive(Default)]
struct Types {
    order: Vec<String>,
    parent: HashMap<String, Option<String>>,
}

impl Types {
    fn declare(&mut self, items: &[SExpr]) -> Result<()> {
        for (name, pos, parent) in typed_list(items)? {
            if name == "object" {
                continue;
            }
            if self.parent.contains_key(&name) {
                return err(pos, ErrorKind::Duplicate, format!("type {name} declared twice"));
            }
            let parent = parent.map(|(p, _)| p).filter(|p| p != "object");
            self.order.push(name.clone());
            self.parent.insert(name, parent);
        }
        // Parents that are only mentioned as parents become root types.
        let mut i = 0;
        while i < self.order.len() {
            if let Some(Some(parent)) = self.parent.get(&self.order[i]).cloned() {
                if !self.parent.contains_key(&parent) {
                    self.order.push(parent.clone());
                    self.parent.insert(parent, None);
                }
            }
            i += 1;
        }
        Ok(())
    }

    fn check(&self, ty: &str, pos: Pos) -> Result<Option<String>> {
        if ty == "object" {
            return Ok(None);
        }
        if !self.parent.contains_key(ty) {
            return err(pos, ErrorKind::UnknownType, format!("type {ty} is not declared"));
        }
        Ok(Some(ty.to_string()))
    }

}

struct AtomContext<'a> {
    domain_predicates: &'a [Predicate],
    index: &'a HashMap<String, PredId>,
}

impl AtomContext<'_> {
    fn lookup(&self, name: &str, arity: usize, pos: Pos) -> Result<PredId> {
        let Some(&id) = self.index.get(name) else {
            return err(pos, ErrorKind::UnknownPredicate, format!("unknown predicate {name}"));
        };
        let expected = self.domain_predicates[id.index()].arity;
        if expected != arity {
            return err(
                pos,
                ErrorKind::ArityMismatch,
                format!("predicate {name} has arity {expected}, used with {arity} arguments"),
            );
        }
        Ok(id)
    }
}

/// Collects the atoms of a positive conjunction; `allow_negation` admits
/// `(not atom)` and returns those separately.
fn conjunction<'a>(
    e: &'a SExpr,
    allow_negation: bool,
    section: &str,
) -> Result<(Vec<&'a SExpr>, Vec<&'a SExpr>)> {
    let mut pos_atoms = Vec::new();
    let mut neg_atoms = Vec::new();
    let items = expect_list(e, "a formula")?;
    if items.is_empty() {
        return Ok((pos_atoms, neg_atoms));
    }
    let head = expect_symbol(&items[0], "a formula head")?;
    let mut literal = |lit: &'a SExpr| -> Result<()> {
        let l = expect_list(lit, "a literal")?;
        match l.first().and_then(SExpr::as_symbol) {
            Some("not") => {
                if !allow_negation {
                    return err(lit.pos(), ErrorKind::Unsupported, format!("negation in {section} is not supported"));
                }
                if l.len() != 2 {
                    return err(lit.pos(), ErrorKind::Syntax, "(not ...) takes one atom");
                }
                check_atom_head(&l[1], section)?;
                neg_atoms.push(&l[1]);
                Ok(())
            }
            _ => {
                check_atom_head(lit, section)?;
                pos_atoms.push(lit);
                Ok(())
            }
        }
    };
    if head == "and" {
        for item in &items[1..] {
            literal(item)?;
        }
    } else {
        literal(e)?;
    }
    Ok((pos_atoms, neg_atoms))
}

fn check_atom_head(e: &SExpr, section: &str) -> Result<()> {
    let items = expect_list(e, "an atom")?;
    let head = items
        .first()
        .ok_or_else(|| ParseError::new(e.pos(), ErrorKind::Syntax, "empty atom"))?;
    let head = expect_symbol(head, "a predicate name")?;
    match head {
        "=" => err(e.pos(), ErrorKind::Unsupported, format!("equality in {section} is not supported")),
        "and" => err(e.pos(), ErrorKind::Syntax, "nested 'and'"),
        "or" | "imply" | "forall" | "exists" | "when" | "not" | "increase" | "decrease" | "assign"
        | "either" => err(e.pos(), ErrorKind::Unsupported, format!("'{head}' in {section} is not supported")),
        _ => Ok(()),
    }
}

pub fn parse_domain(text: &str) -> Result<Domain> {
    let root = sexpr::read(text)?;
    let (name, sections) = split_define(&root, "domain")?;

    let mut types = Types::default();
    let mut constants_raw = None;
    let mut predicates_raw = None;
    let mut actions_raw = Vec::new();

    for sec in sections {
        let items = expect_list(sec, "a domain section")?;
        let head = items.first().and_then(SExpr::as_symbol).unwrap_or("");
        match head {
            ":requirements" => check_requirements(&items[1..])?,
            ":types" => types.declare(&items[1..])?,
            ":constants" => constants_raw = Some(&items[1..]),
            ":predicates" => predicates_raw = Some(&items[1..]),
            ":action" => actions_raw.push(sec),
            ":functions" | ":derived" | ":durative-action" | ":constraints" => {
                return err(sec.pos(), ErrorKind::Unsupported, format!("section {head} is not supported"))
            }
            _ => return err(sec.pos(), ErrorKind::Syntax, format!("unknown domain section '{head}'")),
        }
    }

    let mut predicates = Vec::new();
    let mut index = HashMap::new();
    for p in predicates_raw.unwrap_or(&[]) {
        let items = expect_list(p, "a predicate declaration")?;
        let pname = items
            .first()
            .and_then(SExpr::as_symbol)
            .filter(|s| is_identifier(s))
            .ok_or_else(|| ParseError::new(p.pos(), ErrorKind::Syntax, "expected a predicate name"))?;
        let params = typed_list(&items[1..])?;
        for (v, vp, ty) in &params {
            if !v.starts_with('?') {
                return err(*vp, ErrorKind::Syntax, format!("expected a variable, found {v}"));
            }
            if let Some((t, tp)) = ty {
                types.check(t, *tp)?;
            }
        }
        if index.contains_key(pname) {
            return err(p.pos(), ErrorKind::Duplicate, format!("predicate {pname} declared twice"));
        }
        index.insert(pname.to_string(), PredId(predicates.len() as u32));
        predicates.push(Predicate::base(pname, params.len()));
    }
    let mut type_pred = HashMap::new();
    for t in &types.order {
        if index.contains_key(t) {
            // Already declared explicitly as a predicate; it must be unary.
            let id = index[t];
            if predicates[id.index()].arity != 1 {
                return err(root.pos(), ErrorKind::Duplicate, format!("type {t} clashes with predicate {t}"));
            }
            type_pred.insert(t.clone(), id);
            continue;
        }
        let id = PredId(predicates.len() as u32);
        index.insert(t.clone(), id);
        type_pred.insert(t.clone(), id);
        predicates.push(Predicate::base(t.clone(), 1));
    }

    let mut constants = Vec::new();
    let mut constant_types = Vec::new();
    if let Some(raw) = constants_raw {
        for (c, cp, ty) in typed_list(raw)? {
            if !is_identifier(&c) {
                return err(cp, ErrorKind::Syntax, format!("invalid constant name {c}"));
            }
            if constants.contains(&c) {
                return err(cp, ErrorKind::Duplicate, format!("constant {c} declared twice"));
            }
            if let Some((t, tp)) = &ty {
                types.check(t, *tp)?;
            }
            constants.push(c);
            constant_types.push(ty.map(|t| t.0));
        }
    }

    let ctx = AtomContext { domain_predicates: &predicates, index: &index };
    let mut schemas: Vec<ActionSchema> = Vec::new();
    for a in actions_raw {
        let schema = parse_action(a, &ctx, &types, &type_pred, &constants)?;
        if schemas.iter().any(|s| s.name == schema.name) {
            return err(a.pos(), ErrorKind::Duplicate, format!("action {} declared twice", schema.name));
        }
        schemas.push(schema);
    }

    let types = types
        .order
        .iter()
        .map(|t| TypeDecl {
            pred: type_pred[t],
            parent: types.parent[t].as_ref().map(|p| type_pred[p]),
        })
        .collect();
    let constant_types = constant_types
        .into_iter()
        .map(|t| t.and_then(|t| type_pred.get(&t).copied()))
        .collect();
    Ok(Domain { name, predicates, types, constants, constant_types, schemas })
}

fn parse_action(
    a: &SExpr,
    ctx: &AtomContext<'_>,
    types: &Types,
    type_pred: &HashMap<String, PredId>,
    constants: &[String],
) -> Result<ActionSchema> {
    let items = expect_list(a, "(:action ...)")?;
    let name = items
        .get(1)
        .and_then(SExpr::as_symbol)
        .filter(|s| is_identifier(s))
        .ok_or_else(|| ParseError::new(a.pos(), ErrorKind::Syntax, "expected an action name"))?
        .to_string();

    let mut parameters = Vec::new();
    let mut precondition = Vec::new();
    let mut pre_expr = None;
    let mut eff_expr = None;
    let mut i = 2;
    while i < items.len() {
        let key = expect_symbol(&items[i], "an action keyword")?;
        let val = items.get(i + 1).ok_or_else(|| {
            ParseError::new(items[i].pos(), ErrorKind::Syntax, format!("missing value for {key}"))
        })?;
        match key {
            ":parameters" => {
                for (v, vp, ty) in typed_list(expect_list(val, "a parameter list")?)? {
                    if !v.starts_with('?') || v.len() < 2 {
                        return err(vp, ErrorKind::Syntax, format!("expected a variable, found {v}"));
                    }
                    if parameters.contains(&v) {
                        return err(vp, ErrorKind::Duplicate, format!("parameter {v} declared twice"));
                    }
                    parameters.push(v);
                    if let Some((t, tp)) = ty {
                        if let Some(t) = types.check(&t, tp)? {
                            precondition.push(LiftedAtom {
                                pred: type_pred[&t],
                                args: vec![Term::Var(parameters.len() - 1)],
                            });
                        }
                    }
                }
            }
            ":precondition" => pre_expr = Some(val),
            ":effect" => eff_expr = Some(val),
            _ => return err(items[i].pos(), ErrorKind::Syntax, format!("unknown action keyword {key}")),
        }
        i += 2;
    }

    let lift = |e: &SExpr| -> Result<LiftedAtom> {
        let l = e.as_list().unwrap_or(&[]);
        let pname = l[0].as_symbol().unwrap_or("");
        let pred = ctx.lookup(pname, l.len() - 1, e.pos())?;
        let mut args = Vec::with_capacity(l.len() - 1);
        for t in &l[1..] {
            let t_name = expect_symbol(t, "a term")?;
            if t_name.starts_with('?') {
                let idx = parameters.iter().position(|p| p == t_name).ok_or_else(|| {
                    ParseError::new(t.pos(), ErrorKind::UnboundVariable, format!("variable {t_name} is not a parameter of {name}"))
                })?;
                args.push(Term::Var(idx));
            } else {
                let idx = constants.iter().position(|c| c == t_name).ok_or_else(|| {
                    ParseError::new(t.pos(), ErrorKind::UnknownObject, format!("{t_name} is not a declared constant"))
                })?;
                args.push(Term::Const(idx));
            }
        }
        Ok(LiftedAtom { pred, args })
    };

    if let Some(pre) = pre_expr {
        let (atoms, _) = conjunction(pre, false, "preconditions")?;
        for at in atoms {
            let lifted = lift(at)?;
            if !precondition.contains(&lifted) {
                precondition.push(lifted);
            }
        }
    }
    let mut add = Vec::new();
    let mut delete = Vec::new();
    if let Some(eff) = eff_expr {
        let (adds, dels) = conjunction(eff, true, "effects")?;
        for at in adds {
            let lifted = lift(at)?;
            if !add.contains(&lifted) {
                add.push(lifted);
            }
        }
        for at in dels {
            let lifted = lift(at)?;
            if add.contains(&lifted) {
                return err(at.pos(), ErrorKind::ConflictingEffect, "atom is both added and deleted");
            }
            if !delete.contains(&lifted) {
                delete.push(lifted);
            }
        }
    }
    Ok(ActionSchema { name, parameters, precondition, add, delete })
}

pub fn parse_instance(text: &str, domain: &Domain) -> Result<Instance> {
    let root = sexpr::read(text)?;
    let (name, sections) = split_define(&root, "problem")?;

    let mut domain_name = None;
    let mut objects: Vec<String> = domain.constants.clone();
    let mut object_types: Vec<(ObjId, String, Pos)> = Vec::new();
    let mut init_raw = None;
    let mut goal_raw = None;
    for sec in sections {
        let items = expect_list(sec, "a problem section")?;
        let head = items.first().and_then(SExpr::as_symbol).unwrap_or("");
        match head {
            ":domain" => {
                let d = items.get(1).map(|d| expect_symbol(d, "a domain name")).transpose()?;
                let d = d.ok_or_else(|| ParseError::new(sec.pos(), ErrorKind::Syntax, "missing domain name"))?;
                if d != domain.name {
                    return err(sec.pos(), ErrorKind::DomainMismatch, format!("problem is for domain {d}, not {}", domain.name));
                }
                domain_name = Some(d.to_string());
            }
            ":requirements" => check_requirements(&items[1..])?,
            ":objects" => {
                let mut seen: HashSet<String> = objects.iter().cloned().collect();
                for (o, op, ty) in typed_list(&items[1..])? {
                    if !is_identifier(&o) {
                        return err(op, ErrorKind::Syntax, format!("invalid object name {o}"));
                    }
                    if !seen.insert(o.clone()) {
                        return err(op, ErrorKind::Duplicate, format!("object {o} declared twice"));
                    }
                    let id = ObjId(objects.len() as u32);
                    objects.push(o);
                    if let Some((t, tp)) = ty {
                        if t != "object" {
                            object_types.push((id, t, tp));
                        }
                    }
                }
            }
            ":init" => init_raw = Some(&items[1..]),
            ":goal" => {
                if items.len() != 2 {
                    return err(sec.pos(), ErrorKind::Syntax, "(:goal ...) takes one formula");
                }
                goal_raw = Some(&items[1]);
            }
            ":metric" => return err(sec.pos(), ErrorKind::Unsupported, "metrics are not supported"),
            _ => return err(sec.pos(), ErrorKind::Syntax, format!("unknown problem section '{head}'")),
        }
    }

    let ground = |e: &SExpr| -> Result<GroundAtom> {
        check_atom_head(e, "ground atoms")?;
        let l = e.as_list().unwrap_or(&[]);
        let pname = l[0].as_symbol().unwrap_or("");
        let pred = domain.predicate_id(pname).ok_or_else(|| {
            ParseError::new(e.pos(), ErrorKind::UnknownPredicate, format!("unknown predicate {pname}"))
        })?;
        let arity = domain.predicate(pred).arity;
        if arity != l.len() - 1 {
            return err(
                e.pos(),
                ErrorKind::ArityMismatch,
                format!("predicate {pname} has arity {arity}, used with {} arguments", l.len() - 1),
            );
        }
        let mut args = SmallVec::new();
        for t in &l[1..] {
            let o = expect_symbol(t, "an object")?;
            let id = objects.iter().position(|x| x == o).ok_or_else(|| {
                ParseError::new(t.pos(), ErrorKind::UnknownObject, format!("object {o} is not declared"))
            })?;
            args.push(ObjId(id as u32));
        }
        Ok(GroundAtom { pred, args })
    };

    let mut init = Vec::new();
    for (i, ty) in domain.constant_types.iter().enumerate() {
        if let Some(ty) = ty {
            for t in domain.type_closure(*ty) {
                init.push(GroundAtom::new(t, [ObjId(i as u32)]));
            }
        }
    }
    for (id, ty, tp) in &object_types {
        let Some(pred) = domain.predicate_id(ty).filter(|p| domain.types.iter().any(|t| t.pred == *p)) else {
            return err(*tp, ErrorKind::UnknownType, format!("type {ty} is not declared"));
        };
        for t in domain.type_closure(pred) {
            init.push(GroundAtom::new(t, [*id]));
        }
    }
    for a in init_raw.unwrap_or(&[]) {
        init.push(ground(a)?);
    }
    canonicalize_atoms(&mut init);

    let mut goal = Vec::new();
    if let Some(g) = goal_raw {
        let (atoms, _) = conjunction(g, false, "goals")?;
        for a in atoms {
            goal.push(ground(a)?);
        }
    }
    canonicalize_atoms(&mut goal);

    Ok(Instance {
        name,
        domain_name: domain_name.unwrap_or_else(|| domain.name.clone()),
        objects,
        init,
        goal,
    })
}
