/*
 * Copyright Cedar Contributors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *      https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

//! SyGuS-IF v2 export of a single-conjunct synthesis problem.
//!
//! Entities become values of one datatype `E` with a single constructor
//! `(mk-entity etype ename)` over integers. Each attribute name/type pair
//! gets a getter returning `(Option S)`, defined by case analysis over the
//! store, and each attribute name a `has.<attr>` predicate. The hierarchy
//! is the concrete predicate `in_hier`. The function to synthesize, `conj`,
//! has one grammar production per candidate.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::SynthesisProblem;
use crate::model::{
    check_rule, ActionConstraint, ActionName, AttrName, AttrType, BinOp, EntityConstraint, EntityStore,
    EntityTypeName, EntityUid, Expr, Request, RuleEnv, Schema, TypeError, Value, Var,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SygusError {
    #[error("entity {0} has no integer encoding")]
    UnknownEntity(EntityUid),
    #[error("cannot encode `{0}`: {1}")]
    Unsupported(String, String),
    #[error(transparent)]
    Type(#[from] TypeError),
}

/// A seeded bijection from uids to `(type code, id code)` pairs. Type codes
/// are a permutation over the schema's entity types plus `Action`; id codes
/// are a permutation within each type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityIntMapping {
    types: BTreeMap<EntityTypeName, i64>,
    entities: BTreeMap<EntityUid, (i64, i64)>,
    actions: BTreeMap<EntityUid, (i64, i64)>,
}

impl EntityIntMapping {
    /// Number of store entities covered.
    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    pub fn type_code(&self, t: &EntityTypeName) -> Option<i64> {
        self.types.get(t).copied()
    }

    pub fn code(&self, uid: &EntityUid) -> Option<(i64, i64)> {
        self.entities
            .get(uid)
            .or_else(|| self.actions.get(uid))
            .copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityUid, (i64, i64))> {
        self.entities.iter().map(|(u, c)| (u, *c))
    }
}

pub fn make_mapping(store: &EntityStore, schema: &Schema, seed: u64) -> EntityIntMapping {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut type_names: BTreeSet<EntityTypeName> = schema.entity_types().keys().cloned().collect();
    type_names.extend(store.uids().iter().map(|u| u.entity_type().clone()));
    type_names.insert(EntityTypeName::action());
    let type_names: Vec<EntityTypeName> = type_names.into_iter().collect();
    let mut codes: Vec<i64> = (0..type_names.len() as i64).collect();
    codes.shuffle(&mut rng);
    let types: BTreeMap<EntityTypeName, i64> = type_names.into_iter().zip(codes).collect();

    let mut by_type: BTreeMap<&EntityTypeName, Vec<&EntityUid>> = BTreeMap::new();
    for u in store.uids() {
        by_type.entry(u.entity_type()).or_default().push(u);
    }
    let mut entities = BTreeMap::new();
    for (t, uids) in by_type {
        let mut ids: Vec<i64> = (0..uids.len() as i64).collect();
        ids.shuffle(&mut rng);
        for (u, id) in uids.into_iter().zip(ids) {
            entities.insert(u.clone(), (types[t], id));
        }
    }
    let action_type = types[&EntityTypeName::action()];
    let mut ids: Vec<i64> = (0..schema.actions().len() as i64).collect();
    ids.shuffle(&mut rng);
    let actions = schema
        .actions()
        .keys()
        .zip(ids)
        .map(|(a, id)| (a.uid(), (action_type, id)))
        .collect();
    EntityIntMapping {
        types,
        entities,
        actions,
    }
}

fn quote_smt(s: &str) -> String {
    format!("\"{}\"", s.replace('"', "\"\""))
}

fn sort(ty: &AttrType) -> String {
    match ty {
        AttrType::Bool => "Bool".into(),
        AttrType::Long => "Int".into(),
        AttrType::String => "String".into(),
        AttrType::Entity(_) => "E".into(),
        AttrType::Set(x) => format!("(Set {})", sort(x)),
    }
}

fn tag(ty: &AttrType) -> String {
    match ty {
        AttrType::Bool => "Bool".into(),
        AttrType::Long => "Int".into(),
        AttrType::String => "String".into(),
        AttrType::Entity(_) => "E".into(),
        AttrType::Set(x) => format!("Set{}", tag(x)),
    }
}

fn getter(attr: &AttrName, ty: &AttrType) -> String {
    format!("get.{}.{}", attr, tag(ty))
}

fn none_of(ty: &AttrType) -> String {
    format!("(as none (Option {}))", sort(ty))
}

struct Encoder<'a> {
    schema: &'a Schema,
    store: &'a EntityStore,
    mapping: &'a EntityIntMapping,
    env: RuleEnv,
}

impl Encoder<'_> {
    fn entity(&self, uid: &EntityUid) -> Result<String, SygusError> {
        let (t, i) = self.mapping.code(uid).ok_or_else(|| SygusError::UnknownEntity(uid.clone()))?;
        Ok(format!("(mk-entity {t} {i})"))
    }

    fn value(&self, v: &Value, ty: Option<&AttrType>) -> Result<String, SygusError> {
        Ok(match v {
            Value::Bool(b) => b.to_string(),
            Value::Long(i) if *i < 0 => format!("(- {})", i.unsigned_abs()),
            Value::Long(i) => i.to_string(),
            Value::String(s) => quote_smt(s),
            Value::Entity(u) => self.entity(u)?,
            Value::Set(items) => {
                let elem = match ty {
                    Some(AttrType::Set(x)) => (**x).clone(),
                    _ => match items.iter().next() {
                        Some(x) => value_type(x),
                        None => {
                            return Err(SygusError::Unsupported(
                                v.to_string(),
                                "empty set of unknown element type".into(),
                            ))
                        }
                    },
                };
                let empty = format!("(as set.empty (Set {}))", sort(&elem));
                if items.is_empty() {
                    empty
                } else {
                    let parts = items
                        .iter()
                        .map(|x| self.value(x, Some(&elem)))
                        .collect::<Result<Vec<_>, _>>()?;
                    format!("(set.insert {} {empty})", parts.join(" "))
                }
            }
        })
    }

    /// Declared type of an attribute-access expression.
    fn type_of(&self, e: &Expr) -> Option<AttrType> {
        match e {
            Expr::Lit(v) => Some(value_type(v)),
            Expr::Var(Var::Principal) => self.env.principal.iter().next().cloned().map(AttrType::Entity),
            Expr::Var(Var::Resource) => self.env.resource.iter().next().cloned().map(AttrType::Entity),
            Expr::Var(Var::Action) => Some(AttrType::Entity(EntityTypeName::action())),
            Expr::GetAttr(inner, f) => {
                if let Expr::Var(Var::Context) = **inner {
                    return self.env.context.get(f).map(|d| d.ty.clone());
                }
                let owners: Vec<EntityTypeName> = match &**inner {
                    Expr::Var(Var::Principal) => self.env.principal.iter().cloned().collect(),
                    Expr::Var(Var::Resource) => self.env.resource.iter().cloned().collect(),
                    other => self.type_of(other)?.entity_type().cloned().into_iter().collect(),
                };
                owners.iter().find_map(|t| self.schema.attr(t, f).map(|d| d.ty.clone()))
            }
            Expr::Binary(..) | Expr::Has(..) | Expr::Is(..) | Expr::Not(_) | Expr::And(..) | Expr::Or(..) => {
                Some(AttrType::Bool)
            }
            Expr::Set(items) => Some(AttrType::Set(Box::new(self.type_of(items.first()?)?))),
            Expr::Var(Var::Context) => None,
        }
    }

    fn entity_types_of(&self, e: &Expr) -> BTreeSet<EntityTypeName> {
        match e {
            Expr::Var(Var::Principal) => self.env.principal.clone(),
            Expr::Var(Var::Resource) => self.env.resource.clone(),
            other => self
                .type_of(other)
                .and_then(|t| t.entity_type().cloned())
                .into_iter()
                .collect(),
        }
    }

    fn term(&self, e: &Expr) -> Result<String, SygusError> {
        let unsupported = |why: &str| SygusError::Unsupported(e.to_string(), why.into());
        Ok(match e {
            Expr::Lit(v) => self.value(v, None)?,
            Expr::Var(Var::Principal) => "p".into(),
            Expr::Var(Var::Action) => "a".into(),
            Expr::Var(Var::Resource) => "r".into(),
            Expr::Var(Var::Context) => return Err(unsupported("context is not a value")),
            Expr::GetAttr(inner, f) => {
                if let Expr::Var(Var::Context) = **inner {
                    format!("(val ctx.{f})")
                } else {
                    let ty = self.type_of(e).ok_or_else(|| unsupported("unknown attribute"))?;
                    format!("(val ({} {}))", getter(f, &ty), self.term(inner)?)
                }
            }
            Expr::Has(inner, f) => {
                if let Expr::Var(Var::Context) = **inner {
                    format!("((_ is some) ctx.{f})")
                } else {
                    format!("(has.{f} {})", self.term(inner)?)
                }
            }
            Expr::Is(inner, t) => {
                let code = self
                    .mapping
                    .type_code(t)
                    .ok_or_else(|| unsupported("entity type without a code"))?;
                format!("(= (etype {}) {code})", self.term(inner)?)
            }
            Expr::Binary(op, a, b) => {
                let (ta, tb) = (self.term(a)?, self.term(b)?);
                match op {
                    BinOp::Eq => format!("(= {ta} {tb})"),
                    BinOp::Ne => format!("(not (= {ta} {tb}))"),
                    BinOp::Lt => format!("(< {ta} {tb})"),
                    BinOp::Le => format!("(<= {ta} {tb})"),
                    BinOp::Gt => format!("(> {ta} {tb})"),
                    BinOp::Ge => format!("(>= {ta} {tb})"),
                    BinOp::In => match self.type_of(b) {
                        Some(AttrType::Set(elem)) => {
                            // Set membership is plain `set.member` unless an
                            // element could be a strict ancestor of the lhs.
                            let lhs = self.entity_types_of(a);
                            let hier = elem
                                .entity_type()
                                .is_some_and(|x| lhs.iter().any(|t| self.schema.ancestor_types(t).contains(x)));
                            if hier {
                                return Err(unsupported("membership in a set of ancestor entities"));
                            }
                            format!("(set.member {ta} {tb})")
                        }
                        Some(AttrType::Entity(_)) => format!("(in_hier {ta} {tb})"),
                        _ => return Err(unsupported("`in` on a non-entity operand")),
                    },
                }
            }
            Expr::Not(x) => format!("(not {})", self.term(x)?),
            Expr::And(x, y) => format!("(and {} {})", self.term(x)?, self.term(y)?),
            Expr::Or(x, y) => format!("(or {} {})", self.term(x)?, self.term(y)?),
            Expr::Set(items) => {
                let ty = self.type_of(e).ok_or_else(|| unsupported("empty set literal"))?;
                let empty = format!("(as set.empty {})", sort(&ty));
                let parts = items.iter().map(|x| self.term(x)).collect::<Result<Vec<_>, _>>()?;
                format!("(set.insert {} {empty})", parts.join(" "))
            }
        })
    }

    fn entity_constraint(&self, var: &str, c: &EntityConstraint) -> Result<Option<String>, SygusError> {
        Ok(match c {
            EntityConstraint::Any => None,
            EntityConstraint::Eq(u) => Some(format!("(= {var} {})", self.entity(u)?)),
            EntityConstraint::Is(t) => {
                let code = self
                    .mapping
                    .type_code(t)
                    .ok_or_else(|| SygusError::Unsupported(t.to_string(), "entity type without a code".into()))?;
                Some(format!("(= (etype {var}) {code})"))
            }
            EntityConstraint::In(u) => Some(format!("(in_hier {var} {})", self.entity(u)?)),
        })
    }

    fn params(&self) -> String {
        let mut s = String::from("(p E) (a E) (r E)");
        for (f, d) in &self.env.context {
            let _ = write!(s, " (ctx.{f} (Option {}))", sort(&d.ty));
        }
        s
    }

    fn args(&self, req: &Request) -> Result<String, SygusError> {
        let mut s = format!(
            "{} {} {}",
            self.entity(&req.principal)?,
            self.entity(&req.action.uid())?,
            self.entity(&req.resource)?
        );
        for (f, d) in &self.env.context {
            match req.context.get(f) {
                Some(v) => {
                    let _ = write!(s, " (some {})", self.value(v, Some(&d.ty))?);
                }
                None => {
                    let _ = write!(s, " {}", none_of(&d.ty));
                }
            }
        }
        Ok(s)
    }
}

fn value_type(v: &Value) -> AttrType {
    match v {
        Value::Bool(_) => AttrType::Bool,
        Value::Long(_) => AttrType::Long,
        Value::String(_) => AttrType::String,
        Value::Entity(u) => AttrType::Entity(u.entity_type().clone()),
        Value::Set(items) => AttrType::Set(Box::new(items.iter().next().map_or(AttrType::Bool, value_type))),
    }
}

/// The SyGuS-IF v2 document for `prob` under `mapping`.
pub fn encode_sygus(prob: &SynthesisProblem<'_>, mapping: &EntityIntMapping) -> Result<String, SygusError> {
    let env = check_rule(prob.rule, prob.schema)?;
    let enc = Encoder {
        schema: prob.schema,
        store: prob.store,
        mapping,
        env,
    };
    let mut out = String::new();
    let w = &mut out;
    let _ = writeln!(w, "; single-conjunct restriction of rule {}", prob.rule.id);
    let _ = writeln!(w, "(set-logic ALL)");
    let _ = writeln!(w, "(declare-datatype E ((mk-entity (etype Int) (ename Int))))");
    let _ = writeln!(w, "(declare-datatype Option (par (T) ((none) (some (val T)))))");
    for (t, code) in &mapping.types {
        let _ = writeln!(w, "; type {t} = {code}");
    }

    // Getters per attribute name/type pair, `has` per attribute name.
    let mut pairs: BTreeMap<(AttrName, AttrType), BTreeSet<EntityTypeName>> = BTreeMap::new();
    let mut names: BTreeSet<AttrName> = BTreeSet::new();
    for (t, decl) in prob.schema.entity_types() {
        for (f, a) in &decl.attrs {
            pairs.entry((f.clone(), a.ty.clone())).or_default().insert(t.clone());
            names.insert(f.clone());
        }
    }
    for ((f, ty), owners) in &pairs {
        let mut body = none_of(ty);
        let mut cases = Vec::new();
        for (uid, ent) in enc.store.iter() {
            if !owners.contains(uid.entity_type()) {
                continue;
            }
            if let Some(v) = ent.attrs.get(f) {
                cases.push((enc.entity(uid)?, enc.value(v, Some(ty))?));
            }
        }
        for (x, v) in cases.into_iter().rev() {
            body = format!("(ite (= x {x}) (some {v}) {body})");
        }
        let _ = writeln!(w, "(define-fun {} ((x E)) (Option {}) {body})", getter(f, ty), sort(ty));
    }
    for f in &names {
        let holders = enc
            .store
            .iter()
            .filter(|(_, e)| e.attrs.contains_key(f))
            .map(|(u, _)| enc.entity(u).map(|x| format!("(= x {x})")))
            .collect::<Result<Vec<_>, _>>()?;
        let body = match holders.len() {
            0 => "false".to_string(),
            1 => holders[0].clone(),
            _ => format!("(or {})", holders.join(" ")),
        };
        let _ = writeln!(w, "(define-fun has.{f} ((x E)) Bool {body})");
    }
    let mut closure = vec!["(= x y)".to_string()];
    for (d, a) in enc.store.closure_pairs() {
        if d != a {
            closure.push(format!("(and (= x {}) (= y {}))", enc.entity(d)?, enc.entity(a)?));
        }
    }
    let closure = if closure.len() == 1 {
        closure.pop().expect("one")
    } else {
        format!("(or {})", closure.join(" "))
    };
    let _ = writeln!(w, "(define-fun in_hier ((x E) (y E)) Bool {closure})");

    // The rule as it stands: scope and body.
    let mut parts = Vec::new();
    if let Some(c) = enc.entity_constraint("p", &prob.rule.scope.principal)? {
        parts.push(c);
    }
    match &prob.rule.scope.action {
        ActionConstraint::Any => {}
        ActionConstraint::Eq(x) => parts.push(format!("(= a {})", enc.entity(&x.uid())?)),
        ActionConstraint::In(xs) => {
            let alts = xs
                .iter()
                .map(|x: &ActionName| enc.entity(&x.uid()).map(|c| format!("(= a {c})")))
                .collect::<Result<Vec<_>, _>>()?;
            parts.push(match alts.len() {
                0 => "false".into(),
                1 => alts[0].clone(),
                _ => format!("(or {})", alts.join(" ")),
            });
        }
    }
    if let Some(c) = enc.entity_constraint("r", &prob.rule.scope.resource)? {
        parts.push(c);
    }
    if let Some(body) = &prob.rule.body {
        parts.push(enc.term(body)?);
    }
    let base = match parts.len() {
        0 => "true".to_string(),
        1 => parts[0].clone(),
        _ => format!("(and {})", parts.join(" ")),
    };
    let params = enc.params();
    let _ = writeln!(w, "(define-fun rule_base ({params}) Bool {base})");

    let prods = prob
        .candidates
        .iter()
        .map(|c| enc.term(&c.expr))
        .collect::<Result<Vec<_>, _>>()?;
    let _ = writeln!(w, "(synth-fun conj ({params}) Bool");
    let _ = writeln!(w, "  ((Start Bool))");
    let _ = writeln!(w, "  ((Start Bool (");
    for p in &prods {
        let _ = writeln!(w, "    {p}");
    }
    let _ = writeln!(w, "  ))))");

    for req in prob.slice {
        let args = enc.args(req)?;
        let _ = writeln!(w, "(constraint (and (rule_base {args}) (conj {args})))");
    }
    if !prob.targets.is_empty() {
        let denials = prob
            .targets
            .iter()
            .map(|t| enc.args(t).map(|a| format!("(not (and (rule_base {a}) (conj {a})))")))
            .collect::<Result<Vec<_>, _>>()?;
        let body = if denials.len() == 1 {
            denials[0].clone()
        } else {
            format!("(or {})", denials.join(" "))
        };
        let _ = writeln!(w, "(constraint {body})");
    }
    let _ = writeln!(w, "(check-synth)");
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::{enumerate_candidates, EnumConfig};
    use crate::model::{parse_policy, parse_schema};
    use crate::space::denotation;
    use crate::synth::sexpr::{check_sygus, parse_sexprs};

    const SCHEMA: &str = r#"
        entity User { isPCChair: Bool, isAreaChair: Bool, pcMember?: Area, level: Long };
        entity Area;
        entity Paper { authors: Set<User>, reviewers: Set<User>, area: Area};
        action Read appliesTo { principal: User, resource: Paper, context: { urgent?: Bool } };
    "#;

    fn fixture() -> (Schema, EntityStore) {
        let s = parse_schema(SCHEMA).unwrap();
        let st = EntityStore::from_json_str(
            r#"[
              {"uid": {"type": "Area", "id": "a"}, "attrs": {}, "parents": []},
              {"uid": {"type": "Area", "id": "b"}, "attrs": {}, "parents": []},
              {"uid": {"type": "User", "id": "u"}, "attrs": {"isPCChair": false, "isAreaChair": true, "pcMember": {"type": "Area", "id": "a"}, "level": -2}, "parents": []},
              {"uid": {"type": "User", "id": "v"}, "attrs": {"isPCChair": true, "isAreaChair": false, "level": 3}, "parents": []},
              {"uid": {"type": "Paper", "id": "p"}, "attrs": {"authors": [{"type": "User", "id": "v"}], "reviewers": [], "area": {"type": "Area", "id": "a"}}, "parents": []},
              {"uid": {"type": "Paper", "id": "q"}, "attrs": {"authors": [], "reviewers": [{"type": "User", "id": "u"}], "area": {"type": "Area", "id": "b"}}, "parents": []}
            ]"#,
            &s,
        )
        .unwrap();
        (s, st)
    }

    #[test]
    fn mapping_is_seeded_bijection() {
        let (s, st) = fixture();
        let m = make_mapping(&st, &s, 1);
        assert_eq!(m.len(), st.len());
        assert_eq!(m, make_mapping(&st, &s, 1));
        let codes: BTreeSet<(i64, i64)> = m.iter().map(|(_, c)| c).collect();
        assert_eq!(codes.len(), st.len());
        let distinct: BTreeSet<Vec<(i64, i64)>> = (0..100)
            .map(|seed| make_mapping(&st, &s, seed).iter().map(|(_, c)| c).collect())
            .collect();
        assert!(distinct.len() >= 2);
    }

    #[test]
    fn export_is_well_formed_and_seed_independent_in_structure() {
        let (s, st) = fixture();
        let p = parse_policy(
            r#"permit (principal, action == Action::"Read", resource is Paper) when { principal has pcMember };"#,
            &s,
        )
        .unwrap();
        let rule = &p.rules[0];
        let cands = enumerate_candidates(&s, &st, rule, &EnumConfig::default()).unwrap();
        let den = denotation(rule, &s, &st);
        let slice: BTreeSet<Request> = den[..1].iter().cloned().collect();
        let prob = SynthesisProblem {
            rule,
            slice: &slice,
            targets: &den[1..],
            candidates: &cands,
            store: &st,
            schema: &s,
        };
        let a = encode_sygus(&prob, &make_mapping(&st, &s, 1)).unwrap();
        let summary = check_sygus(&a).unwrap();
        assert_eq!(summary.grammar_productions, cands.len());
        assert_eq!(summary.constraints, 2);
        let b = encode_sygus(&prob, &make_mapping(&st, &s, 2)).unwrap();
        assert_ne!(a, b);
        let erase = |t: &str| parse_sexprs(t).unwrap().iter().map(|e| e.erase_numerals()).collect::<Vec<_>>();
        assert_eq!(erase(&a), erase(&b));
    }

    #[test]
    fn empty_slice_single_target() {
        let (s, st) = fixture();
        let p = parse_policy("permit (principal, action, resource);", &s).unwrap();
        let den = denotation(&p.rules[0], &s, &st);
        let slice = BTreeSet::new();
        let cands = enumerate_candidates(&s, &st, &p.rules[0], &EnumConfig::default()).unwrap();
        let prob = SynthesisProblem {
            rule: &p.rules[0],
            slice: &slice,
            targets: &den[..1],
            candidates: &cands,
            store: &st,
            schema: &s,
        };
        let doc = encode_sygus(&prob, &make_mapping(&st, &s, 0)).unwrap();
        let summary = check_sygus(&doc).unwrap();
        assert_eq!(summary.constraints, 1);
        assert!(doc.contains("(constraint (not (and (rule_base"));
    }
}
