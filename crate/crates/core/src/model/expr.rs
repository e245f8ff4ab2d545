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

//! Rule-body expressions.

use std::fmt;

use super::types::{AttrName, EntityTypeName, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Var {
    Principal,
    Action,
    Resource,
    Context,
}

impl Var {
    pub fn name(self) -> &'static str {
        match self {
            Var::Principal => "principal",
            Var::Action => "action",
            Var::Resource => "resource",
            Var::Context => "context",
        }
    }
}

impl fmt::Display for Var {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum BinOp {
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    In,
}

impl BinOp {
    pub fn symbol(self) -> &'static str {
        match self {
            BinOp::Eq => "==",
            BinOp::Ne => "!=",
            BinOp::Lt => "<",
            BinOp::Le => "<=",
            BinOp::Gt => ">",
            BinOp::Ge => ">=",
            BinOp::In => "in",
        }
    }
}

/// Expression AST. The derived ordering is the structural order used to
/// break ties between equally sized candidate predicates.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Expr {
    Lit(Value),
    Var(Var),
    GetAttr(Box<Expr>, AttrName),
    Has(Box<Expr>, AttrName),
    Is(Box<Expr>, EntityTypeName),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Not(Box<Expr>),
    And(Box<Expr>, Box<Expr>),
    Or(Box<Expr>, Box<Expr>),
    Set(Vec<Expr>),
}

impl Expr {
    pub fn var(v: Var) -> Self {
        Expr::Var(v)
    }

    pub fn lit(v: Value) -> Self {
        Expr::Lit(v)
    }

    pub fn get(self, attr: AttrName) -> Self {
        Expr::GetAttr(Box::new(self), attr)
    }

    pub fn has(self, attr: AttrName) -> Self {
        Expr::Has(Box::new(self), attr)
    }

    pub fn is(self, ty: EntityTypeName) -> Self {
        Expr::Is(Box::new(self), ty)
    }

    pub fn binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Expr::Binary(op, Box::new(lhs), Box::new(rhs))
    }

    pub fn eq(lhs: Expr, rhs: Expr) -> Self {
        Self::binary(BinOp::Eq, lhs, rhs)
    }

    pub fn not(e: Expr) -> Self {
        Expr::Not(Box::new(e))
    }

    pub fn and(lhs: Expr, rhs: Expr) -> Self {
        Expr::And(Box::new(lhs), Box::new(rhs))
    }

    pub fn or(lhs: Expr, rhs: Expr) -> Self {
        Expr::Or(Box::new(lhs), Box::new(rhs))
    }

    /// Left-nested conjunction; `None` for an empty list.
    pub fn conjunction(parts: impl IntoIterator<Item = Expr>) -> Option<Expr> {
        parts.into_iter().reduce(Expr::and)
    }

    /// Flattened top-level conjuncts, left to right.
    pub fn conjuncts(&self) -> Vec<&Expr> {
        let mut out = Vec::new();
        fn walk<'a>(e: &'a Expr, out: &mut Vec<&'a Expr>) {
            match e {
                Expr::And(a, b) => {
                    walk(a, out);
                    walk(b, out);
                }
                other => out.push(other),
            }
        }
        walk(self, &mut out);
        out
    }

    /// Number of AST nodes.
    pub fn size(&self) -> usize {
        match self {
            Expr::Lit(_) | Expr::Var(_) => 1,
            Expr::GetAttr(e, _) | Expr::Has(e, _) | Expr::Is(e, _) | Expr::Not(e) => 1 + e.size(),
            Expr::Binary(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => 1 + a.size() + b.size(),
            Expr::Set(items) => 1 + items.iter().map(Expr::size).sum::<usize>(),
        }
    }

    /// `(root, [a1, .., an])` when this is `root.a1...an`.
    pub fn as_path(&self) -> Option<(Var, Vec<AttrName>)> {
        match self {
            Expr::Var(v) => Some((*v, Vec::new())),
            Expr::GetAttr(e, a) => {
                let (v, mut path) = e.as_path()?;
                path.push(a.clone());
                Some((v, path))
            }
            _ => None,
        }
    }

    pub fn mentions_var(&self, v: Var) -> bool {
        match self {
            Expr::Var(x) => *x == v,
            Expr::Lit(_) => false,
            Expr::GetAttr(e, _) | Expr::Has(e, _) | Expr::Is(e, _) | Expr::Not(e) => e.mentions_var(v),
            Expr::Binary(_, a, b) | Expr::And(a, b) | Expr::Or(a, b) => {
                a.mentions_var(v) || b.mentions_var(v)
            }
            Expr::Set(items) => items.iter().any(|e| e.mentions_var(v)),
        }
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Or(..) => 1,
            Expr::And(..) => 2,
            Expr::Binary(..) | Expr::Has(..) | Expr::Is(..) => 3,
            Expr::Not(_) => 4,
            Expr::Lit(Value::Long(i)) if *i < 0 => 4,
            Expr::GetAttr(..) => 5,
            _ => 6,
        }
    }

    fn fmt_at(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        if self.precedence() < min {
            f.write_str("(")?;
            self.fmt_at(f, 0)?;
            return f.write_str(")");
        }
        match self {
            Expr::Lit(v) => write!(f, "{v}"),
            Expr::Var(v) => write!(f, "{v}"),
            Expr::GetAttr(e, a) => {
                e.fmt_at(f, 5)?;
                write!(f, ".{a}")
            }
            Expr::Has(e, a) => {
                e.fmt_at(f, 4)?;
                write!(f, " has {a}")
            }
            Expr::Is(e, t) => {
                e.fmt_at(f, 4)?;
                write!(f, " is {t}")
            }
            Expr::Binary(op, a, b) => {
                a.fmt_at(f, 4)?;
                write!(f, " {} ", op.symbol())?;
                b.fmt_at(f, 4)
            }
            Expr::Not(e) => {
                f.write_str("!")?;
                e.fmt_at(f, 4)
            }
            Expr::And(a, b) => {
                a.fmt_at(f, 2)?;
                f.write_str(" && ")?;
                b.fmt_at(f, 3)
            }
            Expr::Or(a, b) => {
                a.fmt_at(f, 1)?;
                f.write_str(" || ")?;
                b.fmt_at(f, 2)
            }
            Expr::Set(items) => {
                f.write_str("[")?;
                for (i, e) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    e.fmt_at(f, 0)?;
                }
                f.write_str("]")
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_at(f, 0)
    }
}
