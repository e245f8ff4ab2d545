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

//! Type checking for rule bodies.
//!
//! Variables are typed by the set of entity types the rule scope admits.
//! Attribute access on a variable requires every admissible type to declare
//! the attribute with one common type, and optional attributes require a
//! `has` capability. Narrowing is flow-sensitive along `&&` chains: in
//! `x is T && e` and `x has f && e`, `e` may assume the test. The implication
//! shape `!g || e` is checked with `g` assumed in `e`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use super::expr::{BinOp, Expr, Var};
use super::policy::{ActionConstraint, EntityConstraint, Rule, Scope};
use super::schema::{AttrDecl, Schema};
use super::types::{ActionName, AttrName, AttrType, EntityTypeName, Value};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Type {
    Bool,
    Long,
    String,
    /// An entity of one of these types.
    Entity(BTreeSet<EntityTypeName>),
    Set(Box<Type>),
    EmptySet,
    Context,
}

impl Type {
    pub fn entity(t: EntityTypeName) -> Self {
        Type::Entity([t].into_iter().collect())
    }

    pub fn from_attr(t: &AttrType) -> Self {
        match t {
            AttrType::Bool => Type::Bool,
            AttrType::Long => Type::Long,
            AttrType::String => Type::String,
            AttrType::Entity(e) => Type::entity(e.clone()),
            AttrType::Set(x) => Type::Set(Box::new(Type::from_attr(x))),
        }
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Bool => f.write_str("Bool"),
            Type::Long => f.write_str("Long"),
            Type::String => f.write_str("String"),
            Type::Entity(ts) => {
                let names: Vec<&str> = ts.iter().map(EntityTypeName::as_str).collect();
                if names.len() == 1 {
                    f.write_str(names[0])
                } else {
                    write!(f, "[{}]", names.join(", "))
                }
            }
            Type::Set(t) => write!(f, "Set<{t}>"),
            Type::EmptySet => f.write_str("Set<_>"),
            Type::Context => f.write_str("context"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("type error in `{expr}`: {msg}")]
pub struct TypeError {
    pub expr: String,
    pub msg: String,
}

impl TypeError {
    fn new(e: &impl fmt::Display, msg: impl Into<String>) -> Self {
        Self {
            expr: e.to_string(),
            msg: msg.into(),
        }
    }
}

/// Typing environment derived from a rule scope.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RuleEnv {
    pub principal: BTreeSet<EntityTypeName>,
    pub resource: BTreeSet<EntityTypeName>,
    pub actions: Vec<ActionName>,
    pub context: BTreeMap<AttrName, AttrDecl>,
}

impl RuleEnv {
    pub fn for_scope(scope: &Scope, schema: &Schema) -> Result<Self, TypeError> {
        let scope_text = ScopeText(scope);
        let actions: Vec<ActionName> = match &scope.action {
            ActionConstraint::Any => schema.actions().keys().cloned().collect(),
            ActionConstraint::Eq(a) => vec![a.clone()],
            ActionConstraint::In(xs) => {
                let set: BTreeSet<ActionName> = xs.iter().cloned().collect();
                set.into_iter().collect()
            }
        };
        for a in &actions {
            if schema.action(a).is_none() {
                return Err(TypeError::new(&scope_text, format!("unknown action {a}")));
            }
        }
        let mut principal = BTreeSet::new();
        let mut resource = BTreeSet::new();
        for a in &actions {
            let decl = schema.action(a).expect("checked above");
            principal.extend(decl.principal_types.iter().cloned());
            resource.extend(decl.resource_types.iter().cloned());
        }
        let principal = filter_types(principal, &scope.principal, schema, &scope_text, "principal")?;
        let resource = filter_types(resource, &scope.resource, schema, &scope_text, "resource")?;

        let mut context: BTreeMap<AttrName, AttrDecl> = BTreeMap::new();
        if let Some((first, rest)) = actions.split_first() {
            let first_ctx = &schema.action(first).expect("declared").context;
            'attrs: for (name, decl) in first_ctx {
                let mut merged = decl.clone();
                for a in rest {
                    match schema.action(a).expect("declared").context.get(name) {
                        Some(d) if d.ty == decl.ty => merged.optional |= d.optional,
                        _ => continue 'attrs,
                    }
                }
                context.insert(name.clone(), merged);
            }
        }
        Ok(Self {
            principal,
            resource,
            actions,
            context,
        })
    }

    pub fn var_types(&self, v: Var) -> Option<&BTreeSet<EntityTypeName>> {
        match v {
            Var::Principal => Some(&self.principal),
            Var::Resource => Some(&self.resource),
            Var::Action | Var::Context => None,
        }
    }
}

struct ScopeText<'a>(&'a Scope);

impl fmt::Display for ScopeText<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}", self.0)
    }
}

fn filter_types(
    types: BTreeSet<EntityTypeName>,
    c: &EntityConstraint,
    schema: &Schema,
    scope_text: &ScopeText<'_>,
    var: &str,
) -> Result<BTreeSet<EntityTypeName>, TypeError> {
    let out: BTreeSet<EntityTypeName> = match c {
        EntityConstraint::Any => types,
        EntityConstraint::Eq(uid) => {
            declared(schema, uid.entity_type(), scope_text)?;
            types.into_iter().filter(|t| t == uid.entity_type()).collect()
        }
        EntityConstraint::Is(t) => {
            declared(schema, t, scope_text)?;
            types.into_iter().filter(|x| x == t).collect()
        }
        EntityConstraint::In(uid) => {
            let g = uid.entity_type();
            declared(schema, g, scope_text)?;
            types
                .into_iter()
                .filter(|t| t == g || schema.ancestor_types(t).contains(g))
                .collect()
        }
    };
    if out.is_empty() {
        return Err(TypeError::new(
            scope_text,
            format!("scope admits no {var} type for the selected actions"),
        ));
    }
    Ok(out)
}

fn declared(schema: &Schema, t: &EntityTypeName, at: &impl fmt::Display) -> Result<(), TypeError> {
    if schema.entity_type(t).is_none() {
        return Err(TypeError::new(at, format!("unknown entity type `{t}`")));
    }
    Ok(())
}

/// Facts known to hold at a program point.
#[derive(Debug, Clone, Default)]
struct Facts {
    narrowed: BTreeMap<Var, BTreeSet<EntityTypeName>>,
    caps: BTreeSet<(Var, Vec<AttrName>, AttrName)>,
}

struct Checker<'a> {
    schema: &'a Schema,
    env: &'a RuleEnv,
}

impl Checker<'_> {
    fn var_type(&self, v: Var, facts: &Facts) -> Type {
        match v {
            Var::Principal | Var::Resource => Type::Entity(
                facts
                    .narrowed
                    .get(&v)
                    .cloned()
                    .unwrap_or_else(|| self.env.var_types(v).cloned().unwrap_or_default()),
            ),
            Var::Action => Type::entity(EntityTypeName::action()),
            Var::Context => Type::Context,
        }
    }

    /// Facts that hold whenever `e` evaluates to `true`.
    fn assume(&self, e: &Expr, facts: &Facts) -> Facts {
        let mut out = facts.clone();
        match e {
            Expr::Is(inner, t) => {
                if let Expr::Var(v @ (Var::Principal | Var::Resource)) = **inner {
                    let current = match self.var_type(v, facts) {
                        Type::Entity(ts) => ts,
                        _ => BTreeSet::new(),
                    };
                    let narrowed: BTreeSet<_> = current.into_iter().filter(|x| x == t).collect();
                    if !narrowed.is_empty() {
                        out.narrowed.insert(v, narrowed);
                    }
                }
            }
            Expr::Has(inner, attr) => {
                if let Some((v, path)) = inner.as_path() {
                    out.caps.insert((v, path, attr.clone()));
                }
            }
            Expr::And(a, b) => {
                let after_a = self.assume(a, facts);
                out = self.assume(b, &after_a);
            }
            _ => {}
        }
        out
    }

    fn infer(&self, e: &Expr, facts: &Facts) -> Result<Type, TypeError> {
        match e {
            Expr::Lit(v) => self.literal(e, v),
            Expr::Var(v) => Ok(self.var_type(*v, facts)),
            Expr::GetAttr(inner, attr) => {
                let base = self.infer(inner, facts)?;
                let path = inner.as_path();
                let capable = |v: Var, p: Vec<AttrName>| facts.caps.contains(&(v, p, attr.clone()));
                match base {
                    Type::Context => {
                        let d = self.env.context.get(attr).ok_or_else(|| {
                            TypeError::new(e, format!("context has no attribute `{attr}`"))
                        })?;
                        if d.optional && !path.is_some_and(|(v, p)| capable(v, p)) {
                            return Err(TypeError::new(
                                e,
                                format!("optional context attribute `{attr}` accessed without a `has` guard"),
                            ));
                        }
                        Ok(Type::from_attr(&d.ty))
                    }
                    Type::Entity(ts) => {
                        if ts.is_empty() {
                            return Err(TypeError::new(e, "attribute access on an uninhabited entity type"));
                        }
                        let mut found: Option<&AttrType> = None;
                        let mut optional = false;
                        for t in &ts {
                            if t.is_action() {
                                return Err(TypeError::new(e, "actions have no attributes"));
                            }
                            let d = self.schema.attr(t, attr).ok_or_else(|| {
                                TypeError::new(e, format!("entity type `{t}` has no attribute `{attr}`"))
                            })?;
                            if found.is_some_and(|f| f != &d.ty) {
                                return Err(TypeError::new(
                                    e,
                                    format!("attribute `{attr}` has different types across [{}]", Type::Entity(ts.clone())),
                                ));
                            }
                            found = Some(&d.ty);
                            optional |= d.optional;
                        }
                        if optional && !path.is_some_and(|(v, p)| capable(v, p)) {
                            return Err(TypeError::new(
                                e,
                                format!("optional attribute `{attr}` accessed without a `has` guard"),
                            ));
                        }
                        Ok(Type::from_attr(found.expect("nonempty")))
                    }
                    other => Err(TypeError::new(e, format!("attribute access on a value of type {other}"))),
                }
            }
            Expr::Has(inner, _) => match self.infer(inner, facts)? {
                Type::Entity(_) | Type::Context => Ok(Type::Bool),
                other => Err(TypeError::new(e, format!("`has` on a value of type {other}"))),
            },
            Expr::Is(inner, t) => {
                if !t.is_action() {
                    declared(self.schema, t, e)?;
                }
                match self.infer(inner, facts)? {
                    Type::Entity(_) => Ok(Type::Bool),
                    other => Err(TypeError::new(e, format!("`is` on a value of type {other}"))),
                }
            }
            Expr::Binary(op, a, b) => {
                let ta = self.infer(a, facts)?;
                let tb = self.infer(b, facts)?;
                match op {
                    BinOp::Eq | BinOp::Ne => {
                        if comparable(&ta, &tb) {
                            Ok(Type::Bool)
                        } else {
                            Err(TypeError::new(e, format!("cannot compare {ta} with {tb}")))
                        }
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        if ta == Type::Long && tb == Type::Long {
                            Ok(Type::Bool)
                        } else {
                            Err(TypeError::new(e, format!("ordering needs Long operands, found {ta} and {tb}")))
                        }
                    }
                    BinOp::In => {
                        if !matches!(ta, Type::Entity(_)) {
                            return Err(TypeError::new(e, format!("left operand of `in` must be an entity, found {ta}")));
                        }
                        match tb {
                            Type::Entity(_) | Type::EmptySet => Ok(Type::Bool),
                            Type::Set(ref elem) if matches!(**elem, Type::Entity(_)) => Ok(Type::Bool),
                            other => Err(TypeError::new(
                                e,
                                format!("right operand of `in` must be an entity or entity set, found {other}"),
                            )),
                        }
                    }
                }
            }
            Expr::Not(inner) => self.expect_bool(inner, facts).map(|_| Type::Bool),
            Expr::And(a, b) => {
                self.expect_bool(a, facts)?;
                self.expect_bool(b, &self.assume(a, facts))?;
                Ok(Type::Bool)
            }
            Expr::Or(a, b) => {
                self.expect_bool(a, facts)?;
                let rhs_facts = match &**a {
                    Expr::Not(g) => self.assume(g, facts),
                    _ => facts.clone(),
                };
                self.expect_bool(b, &rhs_facts)?;
                Ok(Type::Bool)
            }
            Expr::Set(items) => {
                let mut elem: Option<Type> = None;
                for item in items {
                    let t = self.infer(item, facts)?;
                    elem = Some(match elem {
                        None => t,
                        Some(prev) => join(&prev, &t)
                            .ok_or_else(|| TypeError::new(e, "set literal elements have different types"))?,
                    });
                }
                Ok(elem.map_or(Type::EmptySet, |t| Type::Set(Box::new(t))))
            }
        }
    }

    fn expect_bool(&self, e: &Expr, facts: &Facts) -> Result<(), TypeError> {
        match self.infer(e, facts)? {
            Type::Bool => Ok(()),
            other => Err(TypeError::new(e, format!("expected Bool, found {other}"))),
        }
    }

    fn literal(&self, e: &Expr, v: &Value) -> Result<Type, TypeError> {
        Ok(match v {
            Value::Bool(_) => Type::Bool,
            Value::Long(_) => Type::Long,
            Value::String(_) => Type::String,
            Value::Entity(uid) => {
                let t = uid.entity_type();
                if t.is_action() {
                    if self.schema.action(&ActionName::new(uid.id())).is_none() {
                        return Err(TypeError::new(e, format!("unknown action {uid}")));
                    }
                } else {
                    declared(self.schema, t, e)?;
                }
                Type::entity(t.clone())
            }
            Value::Set(items) => {
                let mut elem: Option<Type> = None;
                for item in items {
                    let t = self.literal(e, item)?;
                    elem = Some(match elem {
                        None => t,
                        Some(prev) => join(&prev, &t)
                            .ok_or_else(|| TypeError::new(e, "set literal elements have different types"))?,
                    });
                }
                elem.map_or(Type::EmptySet, |t| Type::Set(Box::new(t)))
            }
        })
    }
}

fn comparable(a: &Type, b: &Type) -> bool {
    match (a, b) {
        (Type::Bool, Type::Bool) | (Type::Long, Type::Long) | (Type::String, Type::String) => true,
        (Type::Entity(_), Type::Entity(_)) => true,
        (Type::Set(x), Type::Set(y)) => comparable(x, y),
        (Type::EmptySet, Type::Set(_) | Type::EmptySet) | (Type::Set(_), Type::EmptySet) => true,
        _ => false,
    }
}

fn join(a: &Type, b: &Type) -> Option<Type> {
    match (a, b) {
        (Type::Entity(x), Type::Entity(y)) => Some(Type::Entity(x.union(y).cloned().collect())),
        (Type::Set(x), Type::Set(y)) => join(x, y).map(|t| Type::Set(Box::new(t))),
        (Type::EmptySet, t @ Type::Set(_)) | (t @ Type::Set(_), Type::EmptySet) => Some(t.clone()),
        (x, y) if x == y => Some(x.clone()),
        _ => None,
    }
}

/// Type of `e` under the rule environment `env`.
pub fn type_check(e: &Expr, env: &RuleEnv, schema: &Schema) -> Result<Type, TypeError> {
    Checker { schema, env }.infer(e, &Facts::default())
}

/// Check that the rule's scope is well formed and its body is Boolean.
pub fn check_rule(rule: &Rule, schema: &Schema) -> Result<RuleEnv, TypeError> {
    let env = RuleEnv::for_scope(&rule.scope, schema)?;
    if let Some(body) = &rule.body {
        let t = type_check(body, &env, schema)?;
        if t != Type::Bool {
            return Err(TypeError::new(body, format!("rule body must be Bool, found {t}")));
        }
    }
    Ok(env)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::parser::{parse_expr, parse_rules};
    use crate::model::schema::parse_schema;

    const CONF: &str = r#"
        entity User { isPCChair: Bool, isPcMember: Bool};
        entity Paper { authors: Set<User>, reviewers: Set<User>};
        entity Review { ofPaper: Paper, author: User, isMetaReview: Bool };
        action Read appliesTo {
          principal: User, resource: [Review, Paper], context: {isReleased?: Bool}};
    "#;

    const AREAS: &str = r#"
        entity User { isPCChair: Bool, isAreaChair: Bool, pcMember?: Area};
        entity Area;
        entity Paper { authors: Set<User>, reviewers: Set<User>, area: Area};
        action Read appliesTo { principal: User, resource: Paper };
    "#;

    fn check(schema: &str, scope_rule: &str, body: &str) -> Result<Type, TypeError> {
        let s = parse_schema(schema).unwrap();
        let rule = &parse_rules(scope_rule).unwrap()[0];
        let env = RuleEnv::for_scope(&rule.scope, &s)?;
        type_check(&parse_expr(body).unwrap(), &env, &s)
    }

    const ANY: &str = "permit(principal, action, resource);";

    #[test]
    fn is_guard_narrows_principal() {
        assert_eq!(check(CONF, ANY, "principal is User && principal.isPCChair").unwrap(), Type::Bool);
    }

    #[test]
    fn incompatible_equality() {
        assert!(check(CONF, ANY, "1 == true").is_err());
    }

    #[test]
    fn has_guard_enables_optional_access() {
        let rule = r#"permit(principal, action == Action::"Read", resource is Paper);"#;
        assert_eq!(
            check(AREAS, rule, "principal has pcMember && principal.pcMember == resource.area").unwrap(),
            Type::Bool
        );
        let err = check(AREAS, rule, "principal.pcMember == resource.area").unwrap_err();
        assert!(err.msg.contains("without a `has` guard"), "{err}");
    }

    #[test]
    fn union_typed_resource_needs_narrowing() {
        // resource may be Review or Paper; only Review has ofPaper
        assert!(check(CONF, ANY, "principal in resource.ofPaper.authors").is_err());
        assert_eq!(
            check(CONF, ANY, "resource is Review && principal in resource.ofPaper.authors").unwrap(),
            Type::Bool
        );
        let scoped = "permit(principal, action, resource is Review);";
        assert_eq!(check(CONF, scoped, "principal in resource.ofPaper.authors").unwrap(), Type::Bool);
    }

    #[test]
    fn implication_guard_form() {
        assert_eq!(
            check(CONF, ANY, "!(resource is Review) || resource.isMetaReview == false").unwrap(),
            Type::Bool
        );
        // no narrowing through a plain disjunction
        assert!(check(CONF, ANY, "resource is Review || resource.isMetaReview").is_err());
        // no narrowing through negation
        assert!(check(CONF, ANY, "!(resource is Review) && resource.isMetaReview").is_err());
    }

    #[test]
    fn context_attributes() {
        assert!(check(CONF, ANY, "context.isReleased").is_err());
        assert_eq!(check(CONF, ANY, "context has isReleased && context.isReleased").unwrap(), Type::Bool);
    }

    #[test]
    fn membership_operands() {
        assert!(check(CONF, ANY, "principal in 3").is_err());
        assert!(check(CONF, ANY, "1 in resource").is_err());
        assert_eq!(check(CONF, ANY, "principal in [User::\"a\", User::\"b\"]").unwrap(), Type::Bool);
        assert!(check(CONF, ANY, "principal < 3").is_err());
    }

    #[test]
    fn scope_errors() {
        let s = parse_schema(CONF).unwrap();
        let unknown_action = &parse_rules("permit(principal, action == Action::\"Write\", resource);").unwrap()[0];
        assert!(check_rule(unknown_action, &s).is_err());
        let unknown_type = &parse_rules("permit(principal is Ghost, action, resource);").unwrap()[0];
        assert!(check_rule(unknown_type, &s).is_err());
        let not_bool = &parse_rules("permit(principal, action, resource) when { 3 };").unwrap()[0];
        assert!(check_rule(not_bool, &s).is_err());
    }
}
