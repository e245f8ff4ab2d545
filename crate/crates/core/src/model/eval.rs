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

//! Request evaluation.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::entities::EntityStore;
use super::expr::{BinOp, Expr, Var};
use super::policy::{EntityConstraint, Policy, Rule};
use super::types::{ActionName, AttrName, EntityUid, Value};

/// An authorization request. Field order makes the derived ordering
/// `(action, principal, resource, context)`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Request {
    pub action: ActionName,
    pub principal: EntityUid,
    pub resource: EntityUid,
    pub context: BTreeMap<AttrName, Value>,
}

impl Request {
    pub fn new(principal: EntityUid, action: ActionName, resource: EntityUid) -> Self {
        Self {
            action,
            principal,
            resource,
            context: BTreeMap::new(),
        }
    }
}

impl fmt::Display for Request {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {}", self.principal, self.action, self.resource)?;
        if !self.context.is_empty() {
            f.write_str(", {")?;
            for (i, (k, v)) in self.context.iter().enumerate() {
                if i > 0 {
                    f.write_str(", ")?;
                }
                write!(f, "{k}: {v}")?;
            }
            f.write_str("}")?;
        }
        f.write_str(")")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Allowed,
    Denied,
}

impl fmt::Display for Decision {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Decision::Allowed => "allowed",
            Decision::Denied => "denied",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EvalError {
    #[error("entity {0} has no attribute `{1}`")]
    MissingAttribute(EntityUid, AttrName),
    #[error("context has no attribute `{0}`")]
    MissingContext(AttrName),
    #[error("unknown entity {0}")]
    UnknownEntity(EntityUid),
    #[error("type error: {0}")]
    Type(String),
}

/// Evaluate `e` against a request. Attribute values are borrowed from the
/// store or request where possible.
pub fn eval_expr<'a>(e: &'a Expr, req: &'a Request, store: &'a EntityStore) -> Result<Cow<'a, Value>, EvalError> {
    match e {
        Expr::Lit(v) => Ok(Cow::Borrowed(v)),
        Expr::Var(Var::Principal) => Ok(Cow::Owned(Value::Entity(req.principal.clone()))),
        Expr::Var(Var::Resource) => Ok(Cow::Owned(Value::Entity(req.resource.clone()))),
        Expr::Var(Var::Action) => Ok(Cow::Owned(Value::Entity(req.action.uid()))),
        Expr::Var(Var::Context) => Err(EvalError::Type("context is not a value".into())),
        Expr::GetAttr(inner, attr) => {
            if let Expr::Var(Var::Context) = **inner {
                return req
                    .context
                    .get(attr)
                    .map(Cow::Borrowed)
                    .ok_or_else(|| EvalError::MissingContext(attr.clone()));
            }
            let base = eval_expr(inner, req, store)?;
            let uid = entity_of(&base)?;
            let ent = store.get(uid).ok_or_else(|| EvalError::UnknownEntity(uid.clone()))?;
            ent.attrs
                .get(attr)
                .map(Cow::Borrowed)
                .ok_or_else(|| EvalError::MissingAttribute(uid.clone(), attr.clone()))
        }
        Expr::Has(inner, attr) => {
            if let Expr::Var(Var::Context) = **inner {
                return Ok(bool_val(req.context.contains_key(attr)));
            }
            let base = eval_expr(inner, req, store)?;
            let uid = entity_of(&base)?;
            Ok(bool_val(store.get(uid).is_some_and(|ent| ent.attrs.contains_key(attr))))
        }
        Expr::Is(inner, ty) => {
            let base = eval_expr(inner, req, store)?;
            Ok(bool_val(entity_of(&base)?.entity_type() == ty))
        }
        Expr::Binary(op, a, b) => {
            let va = eval_expr(a, req, store)?;
            let vb = eval_expr(b, req, store)?;
            let r = match op {
                BinOp::Eq => *va == *vb,
                BinOp::Ne => *va != *vb,
                BinOp::Lt => long_of(&va)? < long_of(&vb)?,
                BinOp::Le => long_of(&va)? <= long_of(&vb)?,
                BinOp::Gt => long_of(&va)? > long_of(&vb)?,
                BinOp::Ge => long_of(&va)? >= long_of(&vb)?,
                BinOp::In => {
                    let lhs = entity_of(&va)?;
                    match &*vb {
                        Value::Entity(rhs) => store.is_descendant(lhs, rhs),
                        Value::Set(items) => {
                            let mut found = false;
                            for item in items {
                                if store.is_descendant(lhs, entity_of(item)?) {
                                    found = true;
                                    break;
                                }
                            }
                            found
                        }
                        other => return Err(EvalError::Type(format!("`in` expects an entity or set, found {other}"))),
                    }
                }
            };
            Ok(bool_val(r))
        }
        Expr::Not(inner) => Ok(bool_val(!eval_bool(inner, req, store)?)),
        Expr::And(a, b) => {
            if !eval_bool(a, req, store)? {
                return Ok(bool_val(false));
            }
            Ok(bool_val(eval_bool(b, req, store)?))
        }
        Expr::Or(a, b) => {
            if eval_bool(a, req, store)? {
                return Ok(bool_val(true));
            }
            Ok(bool_val(eval_bool(b, req, store)?))
        }
        Expr::Set(items) => {
            let mut out = BTreeSet::new();
            for item in items {
                out.insert(eval_expr(item, req, store)?.into_owned());
            }
            Ok(Cow::Owned(Value::Set(out)))
        }
    }
}

const TRUE: Value = Value::Bool(true);
const FALSE: Value = Value::Bool(false);

fn bool_val(b: bool) -> Cow<'static, Value> {
    Cow::Borrowed(if b { &TRUE } else { &FALSE })
}

fn entity_of(v: &Value) -> Result<&EntityUid, EvalError> {
    v.as_entity()
        .ok_or_else(|| EvalError::Type(format!("expected an entity, found {v}")))
}

fn eval_bool(e: &Expr, req: &Request, store: &EntityStore) -> Result<bool, EvalError> {
    let v = eval_expr(e, req, store)?;
    bool_of(&v)
}

fn bool_of(v: &Value) -> Result<bool, EvalError> {
    v.as_bool()
        .ok_or_else(|| EvalError::Type(format!("expected a Bool, found {v}")))
}

fn long_of(v: &Value) -> Result<i64, EvalError> {
    match v {
        Value::Long(i) => Ok(*i),
        other => Err(EvalError::Type(format!("expected a Long, found {other}"))),
    }
}

fn entity_matches(c: &EntityConstraint, uid: &EntityUid, store: &EntityStore) -> bool {
    match c {
        EntityConstraint::Any => true,
        EntityConstraint::Eq(x) => x == uid,
        EntityConstraint::Is(t) => uid.entity_type() == t,
        EntityConstraint::In(x) => store.is_descendant(uid, x),
    }
}

/// Whether the rule's scope matches the request, ignoring the body.
pub fn scope_matches(rule: &Rule, req: &Request, store: &EntityStore) -> bool {
    rule.scope.action.matches(&req.action)
        && entity_matches(&rule.scope.principal, &req.principal, store)
        && entity_matches(&rule.scope.resource, &req.resource, store)
}

/// Evaluate a body as a condition; errors count as `false`.
pub fn body_holds(body: &Expr, req: &Request, store: &EntityStore) -> bool {
    matches!(eval_expr(body, req, store).as_deref(), Ok(Value::Bool(true)))
}

/// The scope matches and the body evaluates to `true`. A body that raises
/// an evaluation error does not apply.
pub fn rule_applies(rule: &Rule, req: &Request, store: &EntityStore) -> bool {
    scope_matches(rule, req, store) && rule.body.as_ref().is_none_or(|b| body_holds(b, req, store))
}

/// Forbid overrides permit; no applicable permit means deny.
pub fn policy_eval(req: &Request, policy: &Policy, store: &EntityStore) -> Decision {
    if policy.forbids().any(|r| rule_applies(r, req, store)) {
        return Decision::Denied;
    }
    if policy.permits().any(|r| rule_applies(r, req, store)) {
        Decision::Allowed
    } else {
        Decision::Denied
    }
}
