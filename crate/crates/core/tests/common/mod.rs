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

//! Shared fixtures and brute-force reference implementations.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use cedar_tighten::access_log::AccessLog;
use cedar_tighten::model::{
    parse_policy, parse_schema, policy_eval, ActionConstraint, ActionName, AttrName, BinOp, Decision, Effect, Entity,
    EntityConstraint, EntityStore, EntityTypeName, EntityUid, Expr, Policy, Request, Rule, Schema, Value, Var,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CONFERENCE_SCHEMA: &str = r#"
entity User { isPCChair: Bool, isAreaChair: Bool, pcMember?: Area };
entity Area;
entity Paper { authors: Set<User>, reviewers: Set<User>, area: Area };
action Read appliesTo { principal: User, resource: Paper };
"#;

pub const LOOSE_RULE: &str =
    r#"permit (principal, action == Action::"Read", resource is Paper) when { principal has pcMember };"#;

pub const TIGHT_RULE: &str = r#"permit (principal, action == Action::"Read", resource is Paper)
  when { principal has pcMember && principal.pcMember == resource.area };"#;

pub fn uid(ty: &str, id: &str) -> EntityUid {
    EntityUid::new(EntityTypeName::new(ty), id)
}

fn attr(name: &str) -> AttrName {
    AttrName::new(name)
}

fn user_set(ids: impl IntoIterator<Item = String>) -> Value {
    Value::Set(ids.into_iter().map(|i| Value::Entity(uid("User", &i))).collect())
}

/// Three areas, two PC members per area, one chair without an area and four
/// papers per area. Authors and reviewers come from the paper's own area.
pub fn conference_store(schema: &Schema) -> EntityStore {
    let mut ents: Vec<(EntityUid, Entity)> = Vec::new();
    for a in 0..3 {
        ents.push((uid("Area", &format!("area{a}")), Entity::default()));
    }
    for u in 0..6 {
        let mut e = Entity::default();
        e.attrs.insert(attr("isPCChair"), Value::Bool(false));
        e.attrs.insert(attr("isAreaChair"), Value::Bool(u % 2 == 0));
        e.attrs.insert(attr("pcMember"), Value::Entity(uid("Area", &format!("area{}", u / 2))));
        ents.push((uid("User", &format!("pc{u}")), e));
    }
    let mut chair = Entity::default();
    chair.attrs.insert(attr("isPCChair"), Value::Bool(true));
    chair.attrs.insert(attr("isAreaChair"), Value::Bool(false));
    ents.push((uid("User", "chair"), chair));
    for p in 0..12 {
        let a = p / 4;
        let mut e = Entity::default();
        e.attrs.insert(attr("area"), Value::Entity(uid("Area", &format!("area{a}"))));
        e.attrs.insert(attr("authors"), user_set([format!("pc{}", 2 * a + p % 2)]));
        e.attrs.insert(attr("reviewers"), user_set([format!("pc{}", 2 * a + 1 - p % 2)]));
        ents.push((uid("Paper", &format!("paper{p}")), e));
    }
    EntityStore::from_entities(ents, schema).expect("valid store")
}

/// Every PC member reading every paper of their own area, allowed.
pub fn conference_log() -> AccessLog {
    let mut log = AccessLog::new();
    for u in 0..6 {
        for p in 0..12 {
            if p / 4 == u / 2 {
                let r = Request::new(uid("User", &format!("pc{u}")), ActionName::new("Read"), uid("Paper", &format!("paper{p}")));
                log.insert(r, Decision::Allowed).expect("no conflict");
            }
        }
    }
    log
}

// ---------------------------------------------------------------------------
// Random small instances

pub const RANDOM_SCHEMA: &str = r#"
entity Group in [Group];
entity Area;
entity User in [Group] { admin: Bool, level: Long, area?: Area };
entity Doc { owner: User, readers: Set<User>, area: Area, level: Long, group?: Group };
action Read appliesTo { principal: User, resource: Doc };
action Edit appliesTo { principal: User, resource: [Doc, Group] };
"#;

const READ_HEADS: &[&str] = &[
    r#"(principal, action == Action::"Read", resource)"#,
    r#"(principal in Group::"g0", action == Action::"Read", resource)"#,
];

const READ_BODIES: &[&str] = &[
    "principal.admin",
    "!principal.admin",
    "principal.level >= resource.level",
    "resource.level < 2",
    "principal in resource.readers",
    "principal == resource.owner",
    "principal has area && principal.area == resource.area",
    "resource has group && principal in resource.group",
    "principal.level > 1 || principal.admin",
];

const ANY_HEADS: &[&str] = &[
    "(principal, action, resource)",
    r#"(principal, action == Action::"Edit", resource)"#,
    r#"(principal, action, resource is Doc)"#,
];

const ANY_BODIES: &[&str] = &[
    "principal.admin",
    "principal.level > 0",
    "principal.level <= 2",
    "resource is Doc",
    "resource is Group && principal in resource",
    "!(resource is Doc) || resource.owner == principal",
    r#"principal in Group::"g0""#,
];

pub struct Instance {
    pub schema: Schema,
    pub store: EntityStore,
    pub policy: Policy,
    pub log: AccessLog,
}

fn random_store(rng: &mut ChaCha8Rng, schema: &Schema) -> EntityStore {
    let n_groups = rng.gen_range(1..=3);
    let n_areas = rng.gen_range(1..=2);
    let n_users = rng.gen_range(1..=4);
    let n_docs = rng.gen_range(1..=3);
    let mut ents: Vec<(EntityUid, Entity)> = Vec::new();
    let groups: Vec<EntityUid> = (0..n_groups).map(|i| uid("Group", &format!("g{i}"))).collect();
    let areas: Vec<EntityUid> = (0..n_areas).map(|i| uid("Area", &format!("a{i}"))).collect();
    let users: Vec<EntityUid> = (0..n_users).map(|i| uid("User", &format!("u{i}"))).collect();
    for (i, g) in groups.iter().enumerate() {
        let mut e = Entity::default();
        for earlier in &groups[..i] {
            if rng.gen_bool(0.4) {
                e.parents.insert(earlier.clone());
            }
        }
        ents.push((g.clone(), e));
    }
    for a in &areas {
        ents.push((a.clone(), Entity::default()));
    }
    for u in &users {
        let mut e = Entity::default();
        e.attrs.insert(attr("admin"), Value::Bool(rng.gen_bool(0.3)));
        e.attrs.insert(attr("level"), Value::Long(rng.gen_range(0..4)));
        if rng.gen_bool(0.6) {
            e.attrs.insert(attr("area"), Value::Entity(areas.choose(rng).unwrap().clone()));
        }
        for g in &groups {
            if rng.gen_bool(0.4) {
                e.parents.insert(g.clone());
            }
        }
        ents.push((u.clone(), e));
    }
    for i in 0..n_docs {
        let mut e = Entity::default();
        e.attrs.insert(attr("owner"), Value::Entity(users.choose(rng).unwrap().clone()));
        let readers = users.iter().filter(|_| rng.gen_bool(0.4)).map(|u| Value::Entity(u.clone())).collect();
        e.attrs.insert(attr("readers"), Value::Set(readers));
        e.attrs.insert(attr("area"), Value::Entity(areas.choose(rng).unwrap().clone()));
        e.attrs.insert(attr("level"), Value::Long(rng.gen_range(0..4)));
        if rng.gen_bool(0.5) {
            e.attrs.insert(attr("group"), Value::Entity(groups.choose(rng).unwrap().clone()));
        }
        ents.push((uid("Doc", &format!("d{i}")), e));
    }
    EntityStore::from_entities(ents, schema).expect("generated store is valid")
}

fn random_policy(rng: &mut ChaCha8Rng, schema: &Schema) -> Policy {
    let n_rules = rng.gen_range(1..=4);
    let mut text = String::new();
    let mut made = 0;
    while made < n_rules {
        let effect = if rng.gen_bool(0.25) { "forbid" } else { "permit" };
        let (heads, bodies) = if rng.gen_bool(0.5) { (READ_HEADS, READ_BODIES) } else { (ANY_HEADS, ANY_BODIES) };
        let head = heads.choose(rng).unwrap();
        let n_body = rng.gen_range(0..=2);
        let parts: Vec<String> = bodies.choose_multiple(rng, n_body).map(|b| format!("({b})")).collect();
        let mut rule = format!("{effect} {head}");
        if !parts.is_empty() {
            rule.push_str(&format!(" when {{ {} }}", parts.join(" && ")));
        }
        rule.push_str(";\n");
        // Some combinations narrow a variable to no type at all.
        if parse_policy(&rule, schema).is_ok() {
            text.push_str(&rule);
            made += 1;
        }
    }
    parse_policy(&text, schema).unwrap_or_else(|e| panic!("{e}\n{text}"))
}

/// Every appliesTo-valid request over the store, found without the library.
pub fn naive_universe(schema: &Schema, store: &EntityStore) -> Vec<Request> {
    let mut out = Vec::new();
    for (a, decl) in schema.actions() {
        for (p, _) in store.iter() {
            if !decl.principal_types.contains(p.entity_type()) {
                continue;
            }
            for (r, _) in store.iter() {
                if decl.resource_types.contains(r.entity_type()) {
                    out.push(Request::new(p.clone(), a.clone(), r.clone()));
                }
            }
        }
    }
    out.sort();
    out
}

/// A random instance whose log is a random sample of the universe labeled by
/// the policy itself.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let schema = parse_schema(RANDOM_SCHEMA).expect("schema");
    let store = random_store(&mut rng, &schema);
    let policy = random_policy(&mut rng, &schema);
    let mut log = AccessLog::new();
    let p_log = rng.gen_range(0.1..0.9);
    for r in naive_universe(&schema, &store) {
        if rng.gen_bool(p_log) {
            let d = naive_policy_eval(&policy, &r, &store);
            log.insert(r, d).expect("fresh request");
        }
    }
    Instance {
        schema,
        store,
        policy,
        log,
    }
}

// ---------------------------------------------------------------------------
// Reference semantics

/// `a in b` by depth-first search over parents, reflexive.
pub fn naive_in(store: &EntityStore, a: &EntityUid, b: &EntityUid) -> bool {
    let mut stack = vec![a.clone()];
    let mut seen = BTreeSet::new();
    while let Some(x) = stack.pop() {
        if &x == b {
            return true;
        }
        if !seen.insert(x.clone()) {
            continue;
        }
        if let Some(e) = store.get(&x) {
            stack.extend(e.parents.iter().cloned());
        }
    }
    false
}

fn as_entity(v: &Value) -> Option<&EntityUid> {
    match v {
        Value::Entity(u) => Some(u),
        _ => None,
    }
}

fn as_long(v: &Value) -> Option<i64> {
    match v {
        Value::Long(i) => Some(*i),
        _ => None,
    }
}

fn as_bool(v: &Value) -> Option<bool> {
    match v {
        Value::Bool(b) => Some(*b),
        _ => None,
    }
}

/// Evaluate `e`; `None` is an evaluation error.
pub fn naive_eval(e: &Expr, req: &Request, store: &EntityStore) -> Option<Value> {
    match e {
        Expr::Lit(v) => Some(v.clone()),
        Expr::Var(Var::Principal) => Some(Value::Entity(req.principal.clone())),
        Expr::Var(Var::Resource) => Some(Value::Entity(req.resource.clone())),
        Expr::Var(Var::Action) => Some(Value::Entity(uid("Action", req.action.as_str()))),
        Expr::Var(Var::Context) => None,
        Expr::GetAttr(base, a) => {
            if **base == Expr::Var(Var::Context) {
                return req.context.get(a).cloned();
            }
            let b = naive_eval(base, req, store)?;
            store.get(as_entity(&b)?)?.attrs.get(a).cloned()
        }
        Expr::Has(base, a) => {
            if **base == Expr::Var(Var::Context) {
                return Some(Value::Bool(req.context.contains_key(a)));
            }
            let b = naive_eval(base, req, store)?;
            let u = as_entity(&b)?;
            Some(Value::Bool(store.get(u).is_some_and(|x| x.attrs.contains_key(a))))
        }
        Expr::Is(base, t) => {
            let b = naive_eval(base, req, store)?;
            Some(Value::Bool(as_entity(&b)?.entity_type() == t))
        }
        Expr::Binary(op, l, r) => {
            let a = naive_eval(l, req, store)?;
            let b = naive_eval(r, req, store)?;
            let out = match op {
                BinOp::Eq => a == b,
                BinOp::Ne => a != b,
                BinOp::Lt => as_long(&a)? < as_long(&b)?,
                BinOp::Le => as_long(&a)? <= as_long(&b)?,
                BinOp::Gt => as_long(&a)? > as_long(&b)?,
                BinOp::Ge => as_long(&a)? >= as_long(&b)?,
                BinOp::In => {
                    let x = as_entity(&a)?;
                    match &b {
                        Value::Entity(y) => naive_in(store, x, y),
                        Value::Set(items) => {
                            let mut any = false;
                            for it in items {
                                if naive_in(store, x, as_entity(it)?) {
                                    any = true;
                                    break;
                                }
                            }
                            any
                        }
                        _ => return None,
                    }
                }
            };
            Some(Value::Bool(out))
        }
        Expr::Not(x) => Some(Value::Bool(!as_bool(&naive_eval(x, req, store)?)?)),
        Expr::And(a, b) => {
            if !as_bool(&naive_eval(a, req, store)?)? {
                return Some(Value::Bool(false));
            }
            Some(Value::Bool(as_bool(&naive_eval(b, req, store)?)?))
        }
        Expr::Or(a, b) => {
            if as_bool(&naive_eval(a, req, store)?)? {
                return Some(Value::Bool(true));
            }
            Some(Value::Bool(as_bool(&naive_eval(b, req, store)?)?))
        }
        Expr::Set(items) => {
            let mut out = BTreeSet::new();
            for it in items {
                out.insert(naive_eval(it, req, store)?);
            }
            Some(Value::Set(out))
        }
    }
}

fn naive_entity_ok(c: &EntityConstraint, u: &EntityUid, store: &EntityStore) -> bool {
    match c {
        EntityConstraint::Any => true,
        EntityConstraint::Eq(x) => u == x,
        EntityConstraint::Is(t) => u.entity_type() == t,
        EntityConstraint::In(x) => naive_in(store, u, x),
    }
}

pub fn naive_applies(rule: &Rule, req: &Request, store: &EntityStore) -> bool {
    let action_ok = match &rule.scope.action {
        ActionConstraint::Any => true,
        ActionConstraint::Eq(a) => *a == req.action,
        ActionConstraint::In(xs) => xs.contains(&req.action),
    };
    action_ok
        && naive_entity_ok(&rule.scope.principal, &req.principal, store)
        && naive_entity_ok(&rule.scope.resource, &req.resource, store)
        && rule
            .body
            .as_ref()
            .is_none_or(|b| naive_eval(b, req, store) == Some(Value::Bool(true)))
}

pub fn naive_policy_eval(p: &Policy, req: &Request, store: &EntityStore) -> Decision {
    let mut permitted = false;
    for r in &p.rules {
        if naive_applies(r, req, store) {
            match r.effect {
                Effect::Forbid => return Decision::Denied,
                Effect::Permit => permitted = true,
            }
        }
    }
    if permitted {
        Decision::Allowed
    } else {
        Decision::Denied
    }
}

pub fn naive_denotation(rule: &Rule, schema: &Schema, store: &EntityStore) -> BTreeSet<Request> {
    naive_universe(schema, store)
        .into_iter()
        .filter(|r| naive_applies(rule, r, store))
        .collect()
}

pub fn naive_policy_denotation(p: &Policy, schema: &Schema, store: &EntityStore) -> BTreeSet<Request> {
    naive_universe(schema, store)
        .into_iter()
        .filter(|r| naive_policy_eval(p, r, store) == Decision::Allowed)
        .collect()
}

pub fn naive_log_plus(log: &AccessLog) -> BTreeSet<Request> {
    let mut out = BTreeSet::new();
    for (r, d) in log.iter() {
        if d == Decision::Allowed {
            out.insert(r.clone());
        }
    }
    out
}

pub fn naive_slice(rule: &Rule, log: &AccessLog, store: &EntityStore) -> BTreeSet<Request> {
    naive_log_plus(log)
        .into_iter()
        .filter(|r| naive_applies(rule, r, store))
        .collect()
}

pub fn naive_pop(rule: &Rule, schema: &Schema, store: &EntityStore, log: &AccessLog) -> BTreeSet<Request> {
    let slice = naive_slice(rule, log, store);
    naive_denotation(rule, schema, store)
        .into_iter()
        .filter(|r| !slice.contains(r))
        .collect()
}

/// `(over-privileges remaining, intended privileges removed)` by counting.
pub fn naive_metrics(
    init: &BTreeSet<Request>,
    star: &BTreeSet<Request>,
    tight: &BTreeSet<Request>,
    plus: &BTreeSet<Request>,
) -> (f64, f64) {
    let mut op = 0usize;
    let mut op_kept = 0usize;
    for r in init {
        if !tight.contains(r) {
            op += 1;
            if star.contains(r) {
                op_kept += 1;
            }
        }
    }
    let mut iu = 0usize;
    let mut iu_lost = 0usize;
    for r in tight {
        if !plus.contains(r) {
            iu += 1;
            if !star.contains(r) {
                iu_lost += 1;
            }
        }
    }
    let frac = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    (frac(op_kept, op), frac(iu_lost, iu))
}

/// Decision of `p` on every universe request, by the library evaluator.
pub fn decisions(p: &Policy, schema: &Schema, store: &EntityStore) -> BTreeMap<Request, Decision> {
    naive_universe(schema, store)
        .into_iter()
        .map(|r| {
            let d = policy_eval(&r, p, store);
            (r, d)
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Files for driving the binary

pub struct Files {
    pub dir: std::path::PathBuf,
    pub schema: std::path::PathBuf,
    pub entities: std::path::PathBuf,
    pub loose: std::path::PathBuf,
    pub tight: std::path::PathBuf,
    pub log: std::path::PathBuf,
}

/// The conference schema, store, loose and tight policies and log, written
/// under `dir`.
pub fn write_conference_files(dir: &std::path::Path) -> Files {
    let schema = parse_schema(CONFERENCE_SCHEMA).unwrap();
    let store = conference_store(&schema);
    let f = Files {
        dir: dir.to_path_buf(),
        schema: dir.join("schema.cedarschema"),
        entities: dir.join("entities.json"),
        loose: dir.join("loose.cedar"),
        tight: dir.join("tight.cedar"),
        log: dir.join("log.jsonl"),
    };
    std::fs::write(&f.schema, CONFERENCE_SCHEMA).unwrap();
    std::fs::write(&f.entities, store.to_json_string()).unwrap();
    std::fs::write(&f.loose, LOOSE_RULE).unwrap();
    std::fs::write(&f.tight, TIGHT_RULE).unwrap();
    std::fs::write(&f.log, conference_log().to_jsonl()).unwrap();
    f
}

pub fn bin() -> std::process::Command {
    std::process::Command::new(env!("CARGO_BIN_EXE_cedar-tighten"))
}

// ---------------------------------------------------------------------------
// Checks shared by the property, oracle and acceptance suites

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn den_set(rule: &Rule, inst: &Instance) -> BTreeSet<Request> {
    cedar_tighten::space::denotation(rule, &inst.schema, &inst.store).into_iter().collect()
}

/// Tighten the instance with `t` failures and `k` targets per round and check
/// the invariants of the result and of its report.
pub fn check_tightening(inst: &Instance, t: usize, k: usize, seed: u64) -> Result<(), String> {
    use cedar_tighten::access_log::{check_consistency, log_slice, permitted_log};
    use cedar_tighten::tighten::{restrict, TerminationReason, TightenConfig};

    let cfg = TightenConfig {
        max_failures: t,
        targets_per_iter: k,
        seed,
        ..TightenConfig::default()
    };
    let (star, report) = restrict(&inst.policy, &inst.log, &inst.schema, &inst.store, &cfg).map_err(|e| e.to_string())?;

    ensure!(star.rules.len() == inst.policy.rules.len(), "rule count changed");
    for (a, b) in inst.policy.rules.iter().zip(&star.rules) {
        ensure!(a.id == b.id && a.effect == b.effect && a.scope == b.scope, "rule {} changed head", a.id);
        ensure!(a.is_permit() || a == b, "forbid rule {} changed", a.id);
    }
    ensure!(check_consistency(&star, &inst.log, &inst.store).is_consistent(), "tightened policy disagrees with the log");

    let plus = permitted_log(&inst.log);
    for rr in &report.rules {
        let original = inst.policy.rule(&rr.rule_id).unwrap();
        let tightened = star.rule(&rr.rule_id).unwrap();
        let d0 = den_set(original, inst);
        let d1 = den_set(tightened, inst);
        ensure!(d1.is_subset(&d0), "rule {} grew", rr.rule_id);
        let slice = log_slice(original, &plus, &inst.store).requests;
        ensure!(slice.is_subset(&d1), "rule {} lost a logged request", rr.rule_id);

        // Replaying the added conjuncts shrinks the denotation strictly at
        // every accepted round.
        let mut cur = original.clone();
        let mut cur_den = d0;
        for it in &rr.iterations {
            match &it.conjunct {
                Some(c) => {
                    let e = cedar_tighten::model::parse_expr(c).map_err(|e| e.to_string())?;
                    let next = cur.with_conjunct(e);
                    let next_den = den_set(&next, inst);
                    ensure!(next_den.len() < cur_den.len() && next_den.is_subset(&cur_den), "`{c}` did not shrink {cur}");
                    ensure!(it.pop_after < it.pop_before, "pop did not shrink");
                    ensure!(it.pop_after == next_den.difference(&slice).count(), "pop_after is wrong");
                    cur = next;
                    cur_den = next_den;
                }
                None => ensure!(it.pop_after == it.pop_before, "failed round changed the pop"),
            }
        }
        ensure!(cur_den == d1, "replay of rule {} differs from the result", rr.rule_id);
        ensure!(rr.failures <= t, "{} failures exceed {t}", rr.failures);
        let pop_left = d1.difference(&slice).count();
        match rr.termination {
            TerminationReason::PopEmpty => ensure!(pop_left == 0, "popEmpty with {pop_left} left"),
            TerminationReason::FailureBudget => {
                ensure!(rr.failures == t && pop_left > 0, "failureBudget with {} failures", rr.failures)
            }
        }
    }
    Ok(())
}

/// Denotation, POP, slice, closure and metrics against the reference
/// implementations above.
pub fn check_oracles(seed: u64) -> Result<(), String> {
    use cedar_tighten::access_log::{log_slice, permitted_log};
    use cedar_tighten::space::{compute_pop, denotation, policy_denotation, DEFAULT_POP_CAP};
    use cedar_tighten::study::{rule_similarity, semantic_similarity};
    use cedar_tighten::tighten::{restrict, TightenConfig};

    let set = |v: Vec<Request>| -> BTreeSet<Request> { v.into_iter().collect() };
    let inst = random_instance(seed);
    let (schema, store, p, log) = (&inst.schema, &inst.store, &inst.policy, &inst.log);
    for (a, _) in store.iter() {
        for (b, _) in store.iter() {
            ensure!(store.is_descendant(a, b) == naive_in(store, a, b), "{a} in {b}");
        }
    }
    let plus = permitted_log(log);
    ensure!(plus == naive_log_plus(log), "allowed log requests");
    ensure!(set(policy_denotation(p, schema, store)) == naive_policy_denotation(p, schema, store), "policy denotation");
    for r in &p.rules {
        ensure!(set(denotation(r, schema, store)) == naive_denotation(r, schema, store), "denotation of {}", r.id);
        let slice = log_slice(r, &plus, store);
        ensure!(slice.requests == naive_slice(r, log, store), "slice of {}", r.id);
        let pop = compute_pop(r, &slice, schema, store, DEFAULT_POP_CAP).map_err(|e| e.to_string())?;
        ensure!(set(pop.requests) == naive_pop(r, schema, store, log), "pop of {}", r.id);
    }
    // A second random policy stands in for the reference.
    let other = random_instance(seed.wrapping_add(1000)).policy;
    let (star, _) = restrict(p, log, schema, store, &TightenConfig::default()).map_err(|e| e.to_string())?;
    let m = semantic_similarity(p, &star, &other, schema, store, &plus);
    let want = naive_metrics(
        &naive_policy_denotation(p, schema, store),
        &naive_policy_denotation(&star, schema, store),
        &naive_policy_denotation(&other, schema, store),
        &naive_log_plus(log),
    );
    ensure!((m.over_privilege_remaining, m.intended_privilege_removed) == want, "policy metrics {m:?} vs {want:?}");
    let reference = &other.rules[0];
    for (init, tightened) in p.rules.iter().zip(&star.rules) {
        let m = rule_similarity(init, tightened, reference, schema, store, &plus);
        let want = naive_metrics(
            &naive_denotation(init, schema, store),
            &naive_denotation(tightened, schema, store),
            &naive_denotation(reference, schema, store),
            &naive_log_plus(log),
        );
        ensure!((m.over_privilege_remaining, m.intended_privilege_removed) == want, "rule {} metrics", init.id);
    }
    Ok(())
}
