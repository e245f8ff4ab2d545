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

//! Enumeration of type-safe candidate conjuncts for a rule.
//!
//! Candidates are built from attribute chains rooted at `principal`,
//! `resource` and `context`. Each chain carries the guards that make it
//! type-safe: `v is T` when the variable admits several types, and
//! `path has f` for optional attributes. A candidate is `guards && atom`;
//! when the guards include `is` tests, the implication `!(is-guards) ||
//! (other-guards && atom)` is also emitted so that requests of other types
//! are unaffected.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use log::{debug, warn};
use serde::{Deserialize, Serialize};

use crate::model::{
    check_rule, type_check, AttrName, AttrType, BinOp, EntityStore, EntityTypeName, Expr, Rule, RuleEnv, Schema, Type,
    TypeError, Value, Var,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum CandidateKind {
    /// Chain equals chain.
    Equality,
    /// Chain differs from chain.
    Inequality,
    /// Chain compared with a store constant by `==` or `!=`; Boolean chains
    /// appear as `c` and `!c`.
    ConstEquality,
    Has,
    Is,
    /// Negated `has`, `is` or membership atom.
    NegatedAtom,
    IntComparison,
    HierarchyMembership,
    SetMembership,
}

impl CandidateKind {
    pub const ALL: [CandidateKind; 9] = [
        CandidateKind::Equality,
        CandidateKind::Inequality,
        CandidateKind::ConstEquality,
        CandidateKind::Has,
        CandidateKind::Is,
        CandidateKind::NegatedAtom,
        CandidateKind::IntComparison,
        CandidateKind::HierarchyMembership,
        CandidateKind::SetMembership,
    ];

    pub fn name(self) -> &'static str {
        match self {
            CandidateKind::Equality => "equality",
            CandidateKind::Inequality => "inequality",
            CandidateKind::ConstEquality => "constEquality",
            CandidateKind::Has => "has",
            CandidateKind::Is => "is",
            CandidateKind::NegatedAtom => "negatedAtom",
            CandidateKind::IntComparison => "intComparison",
            CandidateKind::HierarchyMembership => "hierarchyMembership",
            CandidateKind::SetMembership => "setMembership",
        }
    }
}

impl fmt::Display for CandidateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CandidateKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        CandidateKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let names: Vec<&str> = CandidateKind::ALL.iter().map(|k| k.name()).collect();
                format!("unknown candidate kind `{s}` (expected one of {})", names.join(", "))
            })
    }
}

pub const DEFAULT_MAX_CANDIDATES: usize = 50_000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EnumConfig {
    pub chain_depth: usize,
    pub constants_from_store: bool,
    pub enabled_kinds: BTreeSet<CandidateKind>,
    pub max_candidates: usize,
}

impl Default for EnumConfig {
    fn default() -> Self {
        Self {
            chain_depth: 2,
            constants_from_store: true,
            enabled_kinds: CandidateKind::ALL.into_iter().collect(),
            max_candidates: DEFAULT_MAX_CANDIDATES,
        }
    }
}

/// `root.path`, the guards that make it type-safe and its result type.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrChain {
    pub root: Var,
    pub path: Vec<AttrName>,
    pub ty: AttrType,
    pub guards: Vec<Expr>,
}

impl AttrChain {
    pub fn expr(&self) -> Expr {
        self.path
            .iter()
            .fold(Expr::var(self.root), |e, a| e.get(a.clone()))
    }
}

impl fmt::Display for AttrChain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for g in &self.guards {
            write!(f, "[{g}] ")?;
        }
        write!(f, "{}: {}", self.expr(), self.ty)
    }
}

fn extend_chain(schema: &Schema, chain: AttrChain, depth: usize, multi_root: bool, out: &mut Vec<AttrChain>) {
    let AttrType::Entity(t) = &chain.ty else {
        out.push(chain);
        return;
    };
    let t = t.clone();
    let base = chain.expr();
    let decl = if chain.path.len() < depth { schema.entity_type(&t) } else { None };
    let prefix = chain.guards.clone();
    let bare = chain.path.is_empty();
    let root = chain.root;
    let path = chain.path.clone();
    out.push(chain);
    let Some(decl) = decl else { return };
    for (f, a) in &decl.attrs {
        let mut guards = prefix.clone();
        if bare && multi_root {
            guards.push(base.clone().is(t.clone()));
        }
        if a.optional {
            guards.push(base.clone().has(f.clone()));
        }
        let mut p = path.clone();
        p.push(f.clone());
        let next = AttrChain {
            root,
            path: p,
            ty: a.ty.clone(),
            guards,
        };
        extend_chain(schema, next, depth, multi_root, out);
    }
}

/// All chains of length at most `depth` rooted at `root` with one of
/// `root_types`, including the bare variable (one chain per type).
pub fn enumerate_attr_chains(
    schema: &Schema,
    root: Var,
    root_types: &BTreeSet<EntityTypeName>,
    depth: usize,
) -> Vec<AttrChain> {
    let mut out = Vec::new();
    let multi = root_types.len() > 1;
    for t in root_types {
        if t.is_action() {
            continue;
        }
        let bare = AttrChain {
            root,
            path: Vec::new(),
            ty: AttrType::Entity(t.clone()),
            guards: Vec::new(),
        };
        extend_chain(schema, bare, depth, multi, &mut out);
    }
    out
}

/// Chains rooted at `context` for the attributes available in `env`.
pub fn context_chains(schema: &Schema, env: &RuleEnv, depth: usize) -> Vec<AttrChain> {
    let mut out = Vec::new();
    if depth == 0 {
        return out;
    }
    let ctx = Expr::var(Var::Context);
    for (f, d) in &env.context {
        let guards = if d.optional { vec![ctx.clone().has(f.clone())] } else { Vec::new() };
        let chain = AttrChain {
            root: Var::Context,
            path: vec![f.clone()],
            ty: d.ty.clone(),
            guards,
        };
        extend_chain(schema, chain, depth, false, &mut out);
    }
    out
}

/// Constants per type: attribute values (set elements included), uids that
/// occur as parents, and both Booleans.
pub fn collect_constants(store: &EntityStore, schema: &Schema) -> BTreeMap<AttrType, BTreeSet<Value>> {
    let _ = schema;
    let mut out: BTreeMap<AttrType, BTreeSet<Value>> = BTreeMap::new();
    out.entry(AttrType::Bool)
        .or_default()
        .extend([Value::Bool(false), Value::Bool(true)]);
    fn add(v: &Value, out: &mut BTreeMap<AttrType, BTreeSet<Value>>) {
        match v {
            Value::Bool(_) => {}
            Value::Long(_) => {
                out.entry(AttrType::Long).or_default().insert(v.clone());
            }
            Value::String(_) => {
                out.entry(AttrType::String).or_default().insert(v.clone());
            }
            Value::Entity(u) => {
                out.entry(AttrType::Entity(u.entity_type().clone()))
                    .or_default()
                    .insert(v.clone());
            }
            Value::Set(items) => items.iter().for_each(|x| add(x, out)),
        }
    }
    for (_, e) in store.iter() {
        for v in e.attrs.values() {
            add(v, &mut out);
        }
        for p in &e.parents {
            add(&Value::Entity(p.clone()), &mut out);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct CandidatePredicate {
    pub expr: Expr,
    pub kind: CandidateKind,
    pub size: usize,
}

impl fmt::Display for CandidatePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.expr)
    }
}

struct Builder<'a> {
    kinds: &'a BTreeSet<CandidateKind>,
    out: BTreeMap<Expr, CandidateKind>,
}

impl Builder<'_> {
    fn on(&self, k: CandidateKind) -> bool {
        self.kinds.contains(&k)
    }

    fn emit(&mut self, kind: CandidateKind, guard_sets: &[&[Expr]], atom: Expr) {
        let mut guards: Vec<Expr> = Vec::new();
        for g in guard_sets.iter().flat_map(|s| s.iter()) {
            if !guards.contains(g) {
                guards.push(g.clone());
            }
        }
        let (is_guards, rest): (Vec<Expr>, Vec<Expr>) = guards.iter().cloned().partition(|g| matches!(g, Expr::Is(..)));
        if !is_guards.is_empty() {
            let body = Expr::conjunction(rest.into_iter().chain([atom.clone()])).expect("nonempty");
            let imp = Expr::or(Expr::not(Expr::conjunction(is_guards).expect("nonempty")), body);
            self.out.entry(imp).or_insert(kind);
        }
        let conj = Expr::conjunction(guards.into_iter().chain([atom])).expect("nonempty");
        self.out.entry(conj).or_insert(kind);
    }
}

fn lit(v: &Value) -> Expr {
    Expr::lit(v.clone())
}

/// Candidate conjuncts for `rule`, sorted by `(size, structure)`.
pub fn enumerate_candidates(
    schema: &Schema,
    store: &EntityStore,
    rule: &Rule,
    cfg: &EnumConfig,
) -> Result<Vec<CandidatePredicate>, TypeError> {
    let env = check_rule(rule, schema)?;
    let depth = cfg.chain_depth.max(1);
    let mut chains = enumerate_attr_chains(schema, Var::Principal, &env.principal, depth);
    chains.extend(enumerate_attr_chains(schema, Var::Resource, &env.resource, depth));
    chains.extend(context_chains(schema, &env, depth));
    let consts = if cfg.constants_from_store {
        collect_constants(store, schema)
    } else {
        let mut m = BTreeMap::new();
        m.insert(AttrType::Bool, [Value::Bool(false), Value::Bool(true)].into_iter().collect());
        m
    };
    let none = BTreeSet::new();
    let consts_of = |t: &AttrType| consts.get(t).unwrap_or(&none);

    let mut b = Builder {
        kinds: &cfg.enabled_kinds,
        out: BTreeMap::new(),
    };
    use CandidateKind as K;
    let neg = b.on(K::NegatedAtom);

    // `is` atoms on variables with several admissible types.
    for (v, types) in [(Var::Principal, &env.principal), (Var::Resource, &env.resource)] {
        if types.len() > 1 {
            for t in types {
                let atom = Expr::var(v).is(t.clone());
                if b.on(K::Is) {
                    b.emit(K::Is, &[], atom.clone());
                }
                if b.on(K::Is) && neg {
                    b.emit(K::NegatedAtom, &[], Expr::not(atom));
                }
            }
        }
    }

    for (i, c) in chains.iter().enumerate() {
        let e = c.expr();
        // `has` atoms for optional attributes of entity-typed chains.
        if b.on(K::Has) {
            if let AttrType::Entity(t) = &c.ty {
                if let Some(decl) = schema.entity_type(t) {
                    for (f, a) in &decl.attrs {
                        if a.optional {
                            let atom = e.clone().has(f.clone());
                            b.emit(K::Has, &[&c.guards], atom.clone());
                            if neg {
                                b.emit(K::NegatedAtom, &[&c.guards], Expr::not(atom));
                            }
                        }
                    }
                }
            }
        }
        // Chain against constants.
        if b.on(K::ConstEquality) {
            if c.ty == AttrType::Bool {
                b.emit(K::ConstEquality, &[&c.guards], e.clone());
                b.emit(K::ConstEquality, &[&c.guards], Expr::not(e.clone()));
            } else if !matches!(c.ty, AttrType::Set(_)) {
                for k in consts_of(&c.ty) {
                    b.emit(K::ConstEquality, &[&c.guards], Expr::eq(e.clone(), lit(k)));
                    b.emit(K::ConstEquality, &[&c.guards], Expr::binary(BinOp::Ne, e.clone(), lit(k)));
                }
            }
        }
        if b.on(K::IntComparison) && c.ty == AttrType::Long {
            for k in consts_of(&AttrType::Long) {
                for op in [BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge] {
                    b.emit(K::IntComparison, &[&c.guards], Expr::binary(op, e.clone(), lit(k)));
                }
            }
        }
        // Hierarchy membership against constants of an ancestor type.
        if b.on(K::HierarchyMembership) {
            if let AttrType::Entity(t) = &c.ty {
                for anc in schema.ancestor_types(t) {
                    for k in consts_of(&AttrType::Entity(anc)) {
                        let atom = Expr::binary(BinOp::In, e.clone(), lit(k));
                        b.emit(K::HierarchyMembership, &[&c.guards], atom.clone());
                        if neg {
                            b.emit(K::NegatedAtom, &[&c.guards], Expr::not(atom));
                        }
                    }
                }
            }
        }
        // Pairs of chains.
        for (j, d) in chains.iter().enumerate() {
            let f = d.expr();
            if e == f {
                continue;
            }
            if i < j && c.ty == d.ty {
                if b.on(K::Equality) {
                    b.emit(K::Equality, &[&c.guards, &d.guards], Expr::eq(e.clone(), f.clone()));
                }
                if b.on(K::Inequality) {
                    b.emit(K::Inequality, &[&c.guards, &d.guards], Expr::binary(BinOp::Ne, e.clone(), f.clone()));
                }
                if b.on(K::IntComparison) && c.ty == AttrType::Long {
                    for op in [BinOp::Lt, BinOp::Le, BinOp::Gt, BinOp::Ge] {
                        b.emit(K::IntComparison, &[&c.guards, &d.guards], Expr::binary(op, e.clone(), f.clone()));
                    }
                }
            }
            let AttrType::Entity(t) = &c.ty else { continue };
            let (kind, applicable) = match &d.ty {
                AttrType::Entity(u) => (K::HierarchyMembership, schema.ancestor_types(t).contains(u)),
                AttrType::Set(elem) => (K::SetMembership, **elem == AttrType::Entity(t.clone())),
                _ => continue,
            };
            if applicable && b.on(kind) {
                let atom = Expr::binary(BinOp::In, e.clone(), f.clone());
                b.emit(kind, &[&c.guards, &d.guards], atom.clone());
                if neg {
                    b.emit(K::NegatedAtom, &[&c.guards, &d.guards], Expr::not(atom));
                }
            }
        }
    }

    let mut out: Vec<CandidatePredicate> = Vec::with_capacity(b.out.len());
    let mut dropped = 0usize;
    for (expr, kind) in b.out {
        if matches!(expr, Expr::Lit(_)) {
            continue;
        }
        match type_check(&expr, &env, schema) {
            Ok(Type::Bool) => out.push(CandidatePredicate {
                size: expr.size(),
                expr,
                kind,
            }),
            other => {
                dropped += 1;
                debug!("dropping ill-typed candidate `{expr}`: {other:?}");
            }
        }
    }
    if dropped > 0 {
        debug!("rule {}: {dropped} ill-typed candidates dropped", rule.id);
    }
    out.sort_by(|a, b| (a.size, &a.expr).cmp(&(b.size, &b.expr)));
    if out.len() > cfg.max_candidates {
        warn!(
            "rule {}: {} candidates exceed the cap of {}; keeping the smallest",
            rule.id,
            out.len(),
            cfg.max_candidates
        );
        out.truncate(cfg.max_candidates);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_expr, parse_policy, parse_schema};

    const REVIEWS: &str = r#"
        entity User { isPCChair: Bool, isPcMember: Bool };
        entity Paper { authors: Set<User>, reviewers: Set<User> };
        entity Review { ofPaper: Paper, author: User, isMetaReview: Bool };
        action Read appliesTo { principal: User, resource: [Review, Paper], context: { isReleased?: Bool } };
    "#;

    const CONFERENCE: &str = r#"
        entity User { isPCChair: Bool, isAreaChair: Bool, pcMember?: Area};
        entity Area;
        entity Paper { authors: Set<User>, reviewers: Set<User>, area: Area};
        action Read appliesTo { principal: User, resource: Paper };
    "#;

    fn types(names: &[&str]) -> BTreeSet<EntityTypeName> {
        names.iter().map(EntityTypeName::new).collect()
    }

    #[test]
    fn review_chains_carry_is_guard() {
        let s = parse_schema(REVIEWS).unwrap();
        let chains = enumerate_attr_chains(&s, Var::Resource, &types(&["Paper", "Review"]), 2);
        let authors = chains
            .iter()
            .find(|c| c.expr().to_string() == "resource.ofPaper.authors")
            .expect("chain present");
        assert_eq!(authors.guards, vec![parse_expr("resource is Review").unwrap()]);
        assert!(chains.iter().all(|c| c.path.len() <= 2));
    }

    #[test]
    fn attribute_less_type_has_only_bare_chain() {
        let s = parse_schema("entity A; action X appliesTo { principal: A, resource: A };").unwrap();
        let chains = enumerate_attr_chains(&s, Var::Principal, &types(&["A"]), 1);
        assert_eq!(chains.len(), 1);
        assert!(chains[0].path.is_empty());
    }

    #[test]
    fn cyclic_schema_is_bounded() {
        let s = parse_schema(
            "entity Paper { metareview: Review }; entity Review { ofPaper: Paper }; \
             action X appliesTo { principal: Paper, resource: Review };",
        )
        .unwrap();
        let chains = enumerate_attr_chains(&s, Var::Resource, &types(&["Review"]), 3);
        assert_eq!(chains.len(), 4);
        assert!(chains.iter().any(|c| c.expr().to_string() == "resource.ofPaper.metareview.ofPaper"));
    }

    #[test]
    fn constants_from_attributes() {
        let s = parse_schema(CONFERENCE).unwrap();
        let empty = collect_constants(&EntityStore::default(), &s);
        assert_eq!(empty.len(), 1);
        assert_eq!(empty[&AttrType::Bool].len(), 2);
        let st = EntityStore::from_json_str(
            r#"[
              {"uid": {"type": "Area", "id": "A1"}, "attrs": {}, "parents": []},
              {"uid": {"type": "Area", "id": "A2"}, "attrs": {}, "parents": []},
              {"uid": {"type": "User", "id": "u"}, "attrs": {"isPCChair": false, "isAreaChair": false, "pcMember": {"type": "Area", "id": "A1"}}, "parents": []},
              {"uid": {"type": "Paper", "id": "p"}, "attrs": {"authors": [], "reviewers": [], "area": {"type": "Area", "id": "A2"}}, "parents": []}
            ]"#,
            &s,
        )
        .unwrap();
        let c = collect_constants(&st, &s);
        let areas = &c[&AttrType::Entity(EntityTypeName::new("Area"))];
        assert_eq!(areas.len(), 2);
    }

    #[test]
    fn intended_conjunct_is_enumerated() {
        let s = parse_schema(CONFERENCE).unwrap();
        let p = parse_policy(
            r#"permit (principal, action == Action::"Read", resource is Paper) when { principal has pcMember };"#,
            &s,
        )
        .unwrap();
        let cands = enumerate_candidates(&s, &EntityStore::default(), &p.rules[0], &EnumConfig::default()).unwrap();
        let want = parse_expr("principal has pcMember && principal.pcMember == resource.area").unwrap();
        assert!(cands.iter().any(|c| c.expr == want));
        assert!(cands.windows(2).all(|w| (w[0].size, &w[0].expr) < (w[1].size, &w[1].expr)));
        let off = EnumConfig {
            enabled_kinds: BTreeSet::new(),
            ..EnumConfig::default()
        };
        assert!(enumerate_candidates(&s, &EntityStore::default(), &p.rules[0], &off).unwrap().is_empty());
    }

    #[test]
    fn kinds_parse() {
        for k in CandidateKind::ALL {
            assert_eq!(k.name().parse::<CandidateKind>(), Ok(k));
        }
        assert!("bogus".parse::<CandidateKind>().is_err());
    }
}
