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

//! Recursive-descent parser for rules and body expressions.
//!
//! Precedence, loosest first: `||`, `&&`, relations (`== != < <= > >= in
//! has is`), unary `!`/`-`, member access, primaries.

use std::collections::BTreeSet;

use super::expr::{BinOp, Expr, Var};
use super::lexer::{Cursor, ParseError, Tok};
use super::policy::{ActionConstraint, Effect, EntityConstraint, Rule, Scope};
use super::types::{ActionName, AttrName, EntityTypeName, EntityUid, Value};

/// Parse rules without type checking. Ids are `policy0`, `policy1`, ...
pub fn parse_rules(text: &str) -> Result<Vec<Rule>, ParseError> {
    let mut cur = Cursor::new(text)?;
    let mut rules = Vec::new();
    while !cur.at_eof() {
        if cur.peek() == &Tok::At {
            return Err(ParseError::new(cur.pos(), "policy annotations are not supported"));
        }
        let effect = if cur.eat_keyword("permit") {
            Effect::Permit
        } else if cur.eat_keyword("forbid") {
            Effect::Forbid
        } else {
            return Err(cur.unexpected("`permit` or `forbid`"));
        };
        cur.expect(&Tok::LParen)?;
        cur.expect_keyword("principal")?;
        let principal = entity_constraint(&mut cur)?;
        cur.expect(&Tok::Comma)?;
        cur.expect_keyword("action")?;
        let action = action_constraint(&mut cur)?;
        cur.expect(&Tok::Comma)?;
        cur.expect_keyword("resource")?;
        let resource = entity_constraint(&mut cur)?;
        cur.expect(&Tok::RParen)?;
        let mut body: Option<Expr> = None;
        loop {
            if cur.eat_keyword("when") {
                cur.expect(&Tok::LBrace)?;
                let e = expr(&mut cur)?;
                cur.expect(&Tok::RBrace)?;
                body = Some(match body {
                    Some(b) => Expr::and(b, e),
                    None => e,
                });
            } else if cur.is_keyword("unless") {
                return Err(ParseError::new(cur.pos(), "`unless` clauses are not supported"));
            } else {
                break;
            }
        }
        cur.expect(&Tok::Semi)?;
        rules.push(Rule {
            id: format!("policy{}", rules.len()),
            effect,
            scope: Scope {
                principal,
                action,
                resource,
            },
            body,
        });
    }
    Ok(rules)
}

/// Parse a standalone body expression.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let mut cur = Cursor::new(text)?;
    let e = expr(&mut cur)?;
    if !cur.at_eof() {
        return Err(cur.unexpected("end of expression"));
    }
    Ok(e)
}

/// Parse an entity uid literal such as `User::"alice"`.
pub fn parse_uid(text: &str) -> Result<EntityUid, ParseError> {
    let mut cur = Cursor::new(text)?;
    let uid = uid(&mut cur)?;
    if !cur.at_eof() {
        return Err(cur.unexpected("end of entity uid"));
    }
    Ok(uid)
}

fn entity_constraint(cur: &mut Cursor) -> Result<EntityConstraint, ParseError> {
    if cur.eat(&Tok::EqEq) {
        Ok(EntityConstraint::Eq(uid(cur)?))
    } else if cur.eat_keyword("is") {
        let ty = type_path(cur)?;
        if cur.is_keyword("in") {
            return Err(ParseError::new(cur.pos(), "`is .. in ..` scope constraints are not supported"));
        }
        Ok(EntityConstraint::Is(ty))
    } else if cur.eat_keyword("in") {
        Ok(EntityConstraint::In(uid(cur)?))
    } else {
        Ok(EntityConstraint::Any)
    }
}

fn action_uid(cur: &mut Cursor) -> Result<ActionName, ParseError> {
    let pos = cur.pos();
    let u = uid(cur)?;
    if !u.entity_type().is_action() {
        return Err(ParseError::new(pos, format!("expected an action uid, found {u}")));
    }
    Ok(ActionName::new(u.id()))
}

fn action_constraint(cur: &mut Cursor) -> Result<ActionConstraint, ParseError> {
    if cur.eat(&Tok::EqEq) {
        Ok(ActionConstraint::Eq(action_uid(cur)?))
    } else if cur.eat_keyword("in") {
        if cur.eat(&Tok::LBracket) {
            let mut names = Vec::new();
            while cur.peek() != &Tok::RBracket {
                names.push(action_uid(cur)?);
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            cur.expect(&Tok::RBracket)?;
            Ok(ActionConstraint::In(names))
        } else {
            Ok(ActionConstraint::In(vec![action_uid(cur)?]))
        }
    } else {
        Ok(ActionConstraint::Any)
    }
}

fn type_path(cur: &mut Cursor) -> Result<EntityTypeName, ParseError> {
    let mut name = cur.expect_ident()?;
    while cur.peek() == &Tok::PathSep && matches!(cur.peek_at(1), Tok::Ident(_)) {
        cur.next();
        name.push_str("::");
        name.push_str(&cur.expect_ident()?);
    }
    Ok(EntityTypeName::new(name))
}

fn uid(cur: &mut Cursor) -> Result<EntityUid, ParseError> {
    let ty = type_path(cur)?;
    cur.expect(&Tok::PathSep)?;
    let id = cur.expect_str()?;
    Ok(EntityUid::new(ty, id))
}

fn expr(cur: &mut Cursor) -> Result<Expr, ParseError> {
    if cur.is_keyword("if") {
        return Err(ParseError::new(cur.pos(), "`if-then-else` is not supported"));
    }
    let mut lhs = and_expr(cur)?;
    while cur.eat(&Tok::OrOr) {
        let rhs = and_expr(cur)?;
        lhs = Expr::or(lhs, rhs);
    }
    Ok(lhs)
}

fn and_expr(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let mut lhs = relation(cur)?;
    while cur.eat(&Tok::AndAnd) {
        let rhs = relation(cur)?;
        lhs = Expr::and(lhs, rhs);
    }
    Ok(lhs)
}

fn relation(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let lhs = unary(cur)?;
    let op = match cur.peek() {
        Tok::EqEq => BinOp::Eq,
        Tok::Ne => BinOp::Ne,
        Tok::Lt => BinOp::Lt,
        Tok::Le => BinOp::Le,
        Tok::Gt => BinOp::Gt,
        Tok::Ge => BinOp::Ge,
        Tok::Ident(k) if k == "in" => BinOp::In,
        Tok::Ident(k) if k == "has" => {
            cur.next();
            let pos = cur.pos();
            let attr = match cur.next() {
                Tok::Ident(s) | Tok::Str(s) => s,
                other => return Err(ParseError::new(pos, format!("expected attribute name, found {other}"))),
            };
            return Ok(lhs.has(AttrName::new(attr)));
        }
        Tok::Ident(k) if k == "is" => {
            cur.next();
            let ty = type_path(cur)?;
            let is = lhs.clone().is(ty);
            if cur.eat_keyword("in") {
                let rhs = unary(cur)?;
                return Ok(Expr::and(is, Expr::binary(BinOp::In, lhs, rhs)));
            }
            return Ok(is);
        }
        Tok::Ident(k) if k == "like" => {
            return Err(ParseError::new(cur.pos(), "`like` patterns are not supported"))
        }
        Tok::Minus => {
            return Err(ParseError::new(cur.pos(), "arithmetic operators are not supported"))
        }
        _ => return Ok(lhs),
    };
    cur.next();
    let rhs = unary(cur)?;
    Ok(Expr::binary(op, lhs, rhs))
}

fn unary(cur: &mut Cursor) -> Result<Expr, ParseError> {
    if cur.eat(&Tok::Bang) {
        return Ok(Expr::not(unary(cur)?));
    }
    if cur.peek() == &Tok::Minus {
        let pos = cur.pos();
        cur.next();
        return match cur.next() {
            Tok::Int(i) => Ok(Expr::lit(Value::Long(-i))),
            _ => Err(ParseError::new(pos, "unary minus is only supported on integer literals")),
        };
    }
    member(cur)
}

fn member(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let mut e = primary(cur)?;
    loop {
        if cur.eat(&Tok::Dot) {
            let pos = cur.pos();
            let name = cur.expect_ident()?;
            if cur.peek() == &Tok::LParen {
                return Err(ParseError::new(pos, format!("method `{name}` is not supported")));
            }
            e = e.get(AttrName::new(name));
        } else if cur.peek() == &Tok::LBracket {
            return Err(ParseError::new(cur.pos(), "index access is not supported"));
        } else {
            return Ok(e);
        }
    }
}

fn primary(cur: &mut Cursor) -> Result<Expr, ParseError> {
    let pos = cur.pos();
    match cur.peek().clone() {
        Tok::Int(i) => {
            cur.next();
            Ok(Expr::lit(Value::Long(i)))
        }
        Tok::Str(s) => {
            cur.next();
            Ok(Expr::lit(Value::string(s)))
        }
        Tok::LParen => {
            cur.next();
            let e = expr(cur)?;
            cur.expect(&Tok::RParen)?;
            Ok(e)
        }
        Tok::LBracket => {
            cur.next();
            let mut items = Vec::new();
            while cur.peek() != &Tok::RBracket {
                items.push(expr(cur)?);
                if !cur.eat(&Tok::Comma) {
                    break;
                }
            }
            cur.expect(&Tok::RBracket)?;
            Ok(Expr::Set(items))
        }
        Tok::LBrace => Err(ParseError::new(pos, "record literals are not supported")),
        Tok::Ident(name) => match name.as_str() {
            "true" => {
                cur.next();
                Ok(Expr::lit(Value::Bool(true)))
            }
            "false" => {
                cur.next();
                Ok(Expr::lit(Value::Bool(false)))
            }
            "principal" | "action" | "resource" | "context" if cur.peek_at(1) != &Tok::PathSep => {
                cur.next();
                Ok(Expr::var(match name.as_str() {
                    "principal" => Var::Principal,
                    "action" => Var::Action,
                    "resource" => Var::Resource,
                    _ => Var::Context,
                }))
            }
            _ => {
                if cur.peek_at(1) == &Tok::LParen {
                    return Err(ParseError::new(pos, format!("function `{name}` is not supported")));
                }
                Ok(Expr::lit(Value::Entity(uid(cur)?)))
            }
        },
        _ => Err(cur.unexpected("expression")),
    }
}

/// Literal set values appearing in `Expr::Set` when every element is a literal.
pub fn literal_set(items: &[Expr]) -> Option<Value> {
    items
        .iter()
        .map(|e| match e {
            Expr::Lit(v) => Some(v.clone()),
            _ => None,
        })
        .collect::<Option<BTreeSet<_>>>()
        .map(Value::Set)
}
