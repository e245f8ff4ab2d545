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

//! The supported Cedar subset: schemas, entities, policies and evaluation.

pub mod entities;
pub mod eval;
pub mod expr;
pub mod lexer;
pub mod parser;
pub mod policy;
pub mod schema;
pub mod typecheck;
pub mod types;

use thiserror::Error;

pub use entities::{parse_entities, Entity, EntityError, EntityStore};
pub use eval::{eval_expr, policy_eval, rule_applies, scope_matches, Decision, EvalError, Request};
pub use expr::{BinOp, Expr, Var};
pub use lexer::{ParseError, Pos};
pub use parser::{parse_expr, parse_rules, parse_uid};
pub use policy::{ActionConstraint, Effect, EntityConstraint, Policy, Rule, Scope};
pub use schema::{parse_schema, ActionDecl, AttrDecl, EntityTypeDecl, Schema, SchemaError};
pub use typecheck::{check_rule, type_check, RuleEnv, Type, TypeError};
pub use types::{ActionName, AttrName, AttrType, EntityTypeName, EntityUid, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Syntax(#[from] ParseError),
    #[error("rule {rule}: {source}")]
    Type { rule: String, source: TypeError },
}

/// Parse a policy and type-check every rule against `schema`.
pub fn parse_policy(text: &str, schema: &Schema) -> Result<Policy, PolicyError> {
    let rules = parse_rules(text)?;
    for r in &rules {
        check_rule(r, schema).map_err(|source| PolicyError::Type {
            rule: r.id.clone(),
            source,
        })?;
    }
    Ok(Policy::new(rules))
}
