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

//! S-expressions and a structural checker for SyGuS-IF v2 documents.
//!
//! The checker is not a solver front end. It verifies that the document is
//! a sequence of known commands, that parentheses balance, and that every
//! symbol is a builtin, a declared datatype, constructor or selector, a
//! defined function, a grammar nonterminal or a bound parameter.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SExpr {
    Atom(String),
    Str(String),
    List(Vec<SExpr>),
}

impl SExpr {
    pub fn atom(&self) -> Option<&str> {
        match self {
            SExpr::Atom(a) => Some(a),
            _ => None,
        }
    }

    pub fn list(&self) -> Option<&[SExpr]> {
        match self {
            SExpr::List(xs) => Some(xs),
            _ => None,
        }
    }

    /// Replace every integer numeral with `0`.
    pub fn erase_numerals(&self) -> SExpr {
        match self {
            SExpr::Atom(a) if a.parse::<i64>().is_ok() => SExpr::Atom("0".into()),
            SExpr::List(xs) => SExpr::List(xs.iter().map(SExpr::erase_numerals).collect()),
            other => other.clone(),
        }
    }
}

impl fmt::Display for SExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SExpr::Atom(a) => f.write_str(a),
            SExpr::Str(s) => write!(f, "\"{}\"", s.replace('"', "\"\"")),
            SExpr::List(xs) => {
                f.write_str("(")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" ")?;
                    }
                    write!(f, "{x}")?;
                }
                f.write_str(")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line}: {msg}")]
pub struct SExprError {
    pub line: usize,
    pub msg: String,
}

/// Parse a sequence of s-expressions. `;` starts a line comment and strings
/// use `""` for an embedded quote.
pub fn parse_sexprs(text: &str) -> Result<Vec<SExpr>, SExprError> {
    let mut stack: Vec<(usize, Vec<SExpr>)> = vec![(0, Vec::new())];
    let mut chars = text.chars().peekable();
    let mut line = 1;
    let err = |line, msg: &str| SExprError { line, msg: msg.into() };
    while let Some(c) = chars.next() {
        match c {
            '\n' => line += 1,
            c if c.is_whitespace() => {}
            ';' => {
                while chars.peek().is_some_and(|c| *c != '\n') {
                    chars.next();
                }
            }
            '(' => stack.push((line, Vec::new())),
            ')' => {
                if stack.len() == 1 {
                    return Err(err(line, "unbalanced `)`"));
                }
                let (_, items) = stack.pop().expect("nonempty");
                stack.last_mut().expect("root").1.push(SExpr::List(items));
            }
            '"' => {
                let mut s = String::new();
                loop {
                    match chars.next() {
                        None => return Err(err(line, "unterminated string")),
                        Some('"') if chars.peek() == Some(&'"') => {
                            chars.next();
                            s.push('"');
                        }
                        Some('"') => break,
                        Some(ch) => {
                            if ch == '\n' {
                                line += 1;
                            }
                            s.push(ch);
                        }
                    }
                }
                stack.last_mut().expect("root").1.push(SExpr::Str(s));
            }
            _ => {
                let mut a = String::from(c);
                while chars
                    .peek()
                    .is_some_and(|c| !c.is_whitespace() && !matches!(c, '(' | ')' | ';' | '"'))
                {
                    a.push(chars.next().expect("peeked"));
                }
                stack.last_mut().expect("root").1.push(SExpr::Atom(a));
            }
        }
    }
    if stack.len() > 1 {
        return Err(err(stack.last().expect("nonempty").0, "unclosed `(`"));
    }
    Ok(stack.pop().expect("root").1)
}

const BUILTINS: &[&str] = &[
    "Bool", "Int", "String", "Set", "true", "false", "and", "or", "not", "=>", "=", "distinct", "ite", "<", "<=",
    ">", ">=", "+", "-", "*", "as", "_", "is", "set.member", "set.insert", "set.empty", "set.union", "set.singleton",
    "Constant", "Variable",
];

const COMMANDS: &[&str] = &[
    "set-logic",
    "set-option",
    "set-info",
    "declare-datatype",
    "declare-datatypes",
    "define-fun",
    "synth-fun",
    "declare-var",
    "constraint",
    "check-synth",
];

/// Counts of the declarations found by [`check_sygus`].
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SygusSummary {
    pub commands: usize,
    pub defined_functions: usize,
    pub synth_functions: usize,
    pub grammar_productions: usize,
    pub constraints: usize,
}

fn symbols_in(e: &SExpr, out: &mut Vec<String>) {
    match e {
        SExpr::Atom(a) => out.push(a.clone()),
        SExpr::Str(_) => {}
        SExpr::List(xs) => xs.iter().for_each(|x| symbols_in(x, out)),
    }
}

fn is_literal(a: &str) -> bool {
    a.parse::<i64>().is_ok()
}

struct Scope<'a> {
    global: &'a BTreeSet<String>,
    local: BTreeSet<String>,
}

impl Scope<'_> {
    fn check(&self, e: &SExpr, line_hint: usize) -> Result<(), SExprError> {
        let mut syms = Vec::new();
        symbols_in(e, &mut syms);
        for s in syms {
            if !(is_literal(&s) || BUILTINS.contains(&s.as_str()) || self.global.contains(&s) || self.local.contains(&s)) {
                return Err(SExprError {
                    line: line_hint,
                    msg: format!("undeclared symbol `{s}`"),
                });
            }
        }
        Ok(())
    }
}

fn params(e: &SExpr, cmd: usize) -> Result<Vec<(String, SExpr)>, SExprError> {
    let bad = || SExprError {
        line: cmd,
        msg: "malformed parameter list".into(),
    };
    e.list()
        .ok_or_else(bad)?
        .iter()
        .map(|p| match p.list() {
            Some([SExpr::Atom(n), sort]) => Ok((n.clone(), sort.clone())),
            _ => Err(bad()),
        })
        .collect()
}

/// Structural well-formedness check. Errors carry the 1-based index of the
/// offending command in place of a line number.
pub fn check_sygus(text: &str) -> Result<SygusSummary, SExprError> {
    let cmds = parse_sexprs(text)?;
    let mut global: BTreeSet<String> = BTreeSet::new();
    let mut summary = SygusSummary::default();
    let mut saw_logic = false;
    for (i, cmd) in cmds.iter().enumerate() {
        let n = i + 1;
        let err = |msg: String| SExprError { line: n, msg };
        let items = cmd.list().ok_or_else(|| err("expected a command".into()))?;
        let head = items
            .first()
            .and_then(SExpr::atom)
            .ok_or_else(|| err("empty command".into()))?;
        if !COMMANDS.contains(&head) {
            return Err(err(format!("unknown command `{head}`")));
        }
        summary.commands += 1;
        match head {
            "set-logic" => {
                if items.len() != 2 {
                    return Err(err("set-logic takes one argument".into()));
                }
                saw_logic = true;
            }
            "declare-datatype" => {
                let [_, SExpr::Atom(name), body] = items else {
                    return Err(err("malformed declare-datatype".into()));
                };
                global.insert(name.clone());
                // Either ((ctor sel..)..) or (par (T..) ((ctor sel..)..)).
                let (ctors, type_params) = match body.list() {
                    Some([SExpr::Atom(p), SExpr::List(tps), SExpr::List(cs)]) if p == "par" => {
                        (cs.as_slice(), tps.iter().filter_map(SExpr::atom).map(String::from).collect())
                    }
                    Some(cs) => (cs, BTreeSet::new()),
                    None => return Err(err("malformed datatype body".into())),
                };
                let mut local = type_params;
                local.insert(name.clone());
                for c in ctors {
                    let parts = c.list().ok_or_else(|| err("malformed constructor".into()))?;
                    let Some(SExpr::Atom(ctor)) = parts.first() else {
                        return Err(err("malformed constructor".into()));
                    };
                    global.insert(ctor.clone());
                    for sel in &parts[1..] {
                        match sel.list() {
                            Some([SExpr::Atom(s), sort]) => {
                                let scope = Scope { global: &global, local: local.clone() };
                                scope.check(sort, n)?;
                                global.insert(s.clone());
                            }
                            _ => return Err(err("malformed selector".into())),
                        }
                    }
                }
            }
            "define-fun" => {
                let [_, SExpr::Atom(name), ps, sort, body] = items else {
                    return Err(err("malformed define-fun".into()));
                };
                let ps = params(ps, n)?;
                let scope = Scope {
                    global: &global,
                    local: ps.iter().map(|(p, _)| p.clone()).collect(),
                };
                for (_, s) in &ps {
                    scope.check(s, n)?;
                }
                scope.check(sort, n)?;
                scope.check(body, n)?;
                global.insert(name.clone());
                summary.defined_functions += 1;
            }
            "synth-fun" => {
                let (name, ps, sort, grammar) = match items {
                    [_, SExpr::Atom(name), ps, sort] => (name, ps, sort, None),
                    [_, SExpr::Atom(name), ps, sort, decls, rules] => (name, ps, sort, Some((decls, rules))),
                    _ => return Err(err("malformed synth-fun".into())),
                };
                let ps = params(ps, n)?;
                let mut local: BTreeSet<String> = ps.iter().map(|(p, _)| p.clone()).collect();
                Scope { global: &global, local: local.clone() }.check(sort, n)?;
                if let Some((decls, rules)) = grammar {
                    let decls = params(decls, n)?;
                    local.extend(decls.iter().map(|(p, _)| p.clone()));
                    let rules = rules.list().ok_or_else(|| err("malformed grammar".into()))?;
                    if rules.len() != decls.len() {
                        return Err(err("grammar rules do not match nonterminal declarations".into()));
                    }
                    let scope = Scope { global: &global, local };
                    for r in rules {
                        match r.list() {
                            Some([SExpr::Atom(_), s, SExpr::List(prods)]) => {
                                scope.check(s, n)?;
                                for p in prods {
                                    scope.check(p, n)?;
                                }
                                summary.grammar_productions += prods.len();
                            }
                            _ => return Err(err("malformed grammar rule".into())),
                        }
                    }
                }
                global.insert(name.clone());
                summary.synth_functions += 1;
            }
            "declare-var" => {
                let [_, SExpr::Atom(name), sort] = items else {
                    return Err(err("malformed declare-var".into()));
                };
                Scope { global: &global, local: BTreeSet::new() }.check(sort, n)?;
                global.insert(name.clone());
            }
            "constraint" => {
                let [_, body] = items else {
                    return Err(err("constraint takes one term".into()));
                };
                Scope { global: &global, local: BTreeSet::new() }.check(body, n)?;
                summary.constraints += 1;
            }
            "check-synth" => {
                if items.len() != 1 {
                    return Err(err("check-synth takes no arguments".into()));
                }
            }
            _ => {}
        }
    }
    if !saw_logic {
        return Err(SExprError {
            line: 0,
            msg: "missing set-logic".into(),
        });
    }
    Ok(summary)
}
