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

use std::fmt;

use super::expr::Expr;
use super::types::{ActionName, EntityTypeName, EntityUid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Effect {
    Permit,
    Forbid,
}

impl fmt::Display for Effect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effect::Permit => "permit",
            Effect::Forbid => "forbid",
        })
    }
}

/// Principal or resource head constraint.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum EntityConstraint {
    Any,
    Eq(EntityUid),
    Is(EntityTypeName),
    In(EntityUid),
}

impl EntityConstraint {
    /// Entity types this constraint can possibly match, `None` meaning any.
    pub fn type_filter(&self) -> Option<&EntityTypeName> {
        match self {
            EntityConstraint::Eq(uid) => Some(uid.entity_type()),
            EntityConstraint::Is(t) => Some(t),
            EntityConstraint::Any | EntityConstraint::In(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ActionConstraint {
    Any,
    Eq(ActionName),
    In(Vec<ActionName>),
}

impl ActionConstraint {
    pub fn matches(&self, a: &ActionName) -> bool {
        match self {
            ActionConstraint::Any => true,
            ActionConstraint::Eq(x) => x == a,
            ActionConstraint::In(xs) => xs.contains(a),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Scope {
    pub principal: EntityConstraint,
    pub action: ActionConstraint,
    pub resource: EntityConstraint,
}

impl Scope {
    pub fn unconstrained() -> Self {
        Self {
            principal: EntityConstraint::Any,
            action: ActionConstraint::Any,
            resource: EntityConstraint::Any,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Rule {
    pub id: String,
    pub effect: Effect,
    pub scope: Scope,
    pub body: Option<Expr>,
}

impl Rule {
    pub fn is_permit(&self) -> bool {
        self.effect == Effect::Permit
    }

    /// `⟨p, a, o, φ ∧ extra⟩`; an absent body is `true`.
    pub fn with_conjunct(&self, extra: Expr) -> Rule {
        let body = match &self.body {
            Some(b) => Expr::and(b.clone(), extra),
            None => extra,
        };
        Rule {
            body: Some(body),
            ..self.clone()
        }
    }
}

fn fmt_entity_constraint(f: &mut fmt::Formatter<'_>, var: &str, c: &EntityConstraint) -> fmt::Result {
    match c {
        EntityConstraint::Any => f.write_str(var),
        EntityConstraint::Eq(uid) => write!(f, "{var} == {uid}"),
        EntityConstraint::Is(t) => write!(f, "{var} is {t}"),
        EntityConstraint::In(uid) => write!(f, "{var} in {uid}"),
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (", self.effect)?;
        fmt_entity_constraint(f, "principal", &self.scope.principal)?;
        f.write_str(", ")?;
        match &self.scope.action {
            ActionConstraint::Any => f.write_str("action")?,
            ActionConstraint::Eq(a) => write!(f, "action == {a}")?,
            ActionConstraint::In(xs) => {
                f.write_str("action in [")?;
                for (i, a) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{a}")?;
                }
                f.write_str("]")?;
            }
        }
        f.write_str(", ")?;
        fmt_entity_constraint(f, "resource", &self.scope.resource)?;
        f.write_str(")")?;
        if let Some(body) = &self.body {
            write!(f, "\nwhen {{ {body} }}")?;
        }
        f.write_str(";")
    }
}

/// An ordered list of rules with unique ids. Decisions do not depend on the
/// order; it is kept so output policies line up with their inputs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Policy {
    pub rules: Vec<Rule>,
}

impl Policy {
    pub fn new(rules: Vec<Rule>) -> Self {
        Self { rules }
    }

    pub fn rule(&self, id: &str) -> Option<&Rule> {
        self.rules.iter().find(|r| r.id == id)
    }

    pub fn permits(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| r.effect == Effect::Permit)
    }

    pub fn forbids(&self) -> impl Iterator<Item = &Rule> {
        self.rules.iter().filter(|r| r.effect == Effect::Forbid)
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, r) in self.rules.iter().enumerate() {
            if i > 0 {
                f.write_str("\n")?;
            }
            writeln!(f, "{r}")?;
        }
        Ok(())
    }
}
