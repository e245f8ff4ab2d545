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

//! Schema declarations and the human-readable schema grammar.
//!
//! ```text
//! entity Area;
//! entity User in [Group] { isPCChair: Bool, pcMember?: Area };
//! action Read appliesTo { principal: User, resource: [Review, Paper], context: { isReleased?: Bool } };
//! ```

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::lexer::{Cursor, ParseError, Pos, Tok};
use super::types::{ActionName, AttrName, AttrType, EntityTypeName, ACTION_TYPE};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttrDecl {
    pub ty: AttrType,
    pub optional: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EntityTypeDecl {
    pub attrs: BTreeMap<AttrName, AttrDecl>,
    pub parents: BTreeSet<EntityTypeName>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActionDecl {
    pub principal_types: BTreeSet<EntityTypeName>,
    pub resource_types: BTreeSet<EntityTypeName>,
    pub context: BTreeMap<AttrName, AttrDecl>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Schema {
    entity_types: BTreeMap<EntityTypeName, EntityTypeDecl>,
    actions: BTreeMap<ActionName, ActionDecl>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SchemaError {
    #[error("syntax error at {0}")]
    Syntax(#[from] ParseError),
    #[error("{pos}: duplicate declaration of {what}")]
    Duplicate { pos: Pos, what: String },
    #[error("{pos}: unknown entity type `{name}` referenced by {context}")]
    UnknownType {
        pos: Pos,
        name: String,
        context: String,
    },
    #[error("{pos}: {msg}")]
    Invalid { pos: Pos, msg: String },
}

impl Schema {
    pub fn entity_types(&self) -> &BTreeMap<EntityTypeName, EntityTypeDecl> {
        &self.entity_types
    }

    pub fn entity_type(&self, name: &EntityTypeName) -> Option<&EntityTypeDecl> {
        self.entity_types.get(name)
    }

    pub fn actions(&self) -> &BTreeMap<ActionName, ActionDecl> {
        &self.actions
    }

    pub fn action(&self, name: &ActionName) -> Option<&ActionDecl> {
        self.actions.get(name)
    }

    pub fn attr(&self, ty: &EntityTypeName, attr: &AttrName) -> Option<&AttrDecl> {
        self.entity_types.get(ty)?.attrs.get(attr)
    }

    /// Strict ancestor types of `ty` under the declared `in [..]` parent types.
    pub fn ancestor_types(&self, ty: &EntityTypeName) -> BTreeSet<EntityTypeName> {
        let mut seen = BTreeSet::new();
        let mut stack: Vec<EntityTypeName> = self
            .entity_types
            .get(ty)
            .map(|d| d.parents.iter().cloned().collect())
            .unwrap_or_default();
        while let Some(t) = stack.pop() {
            if seen.insert(t.clone()) {
                if let Some(d) = self.entity_types.get(&t) {
                    stack.extend(d.parents.iter().cloned());
                }
            }
        }
        seen
    }

    pub fn parse(text: &str) -> Result<Self, SchemaError> {
        parse_schema(text)
    }
}

pub fn parse_schema(text: &str) -> Result<Schema, SchemaError> {
    let mut cur = Cursor::new(text)?;
    let mut schema = Schema::default();
    // positions of type references, validated once every declaration is known
    let mut refs: Vec<(Pos, EntityTypeName, String)> = Vec::new();

    while !cur.at_eof() {
        let pos = cur.pos();
        if cur.eat_keyword("entity") {
            let mut names = vec![(cur.pos(), cur.expect_ident()?)];
            while cur.eat(&Tok::Comma) {
                names.push((cur.pos(), cur.expect_ident()?));
            }
            let mut decl = EntityTypeDecl::default();
            if cur.eat_keyword("in") {
                for (p, parent) in type_list(&mut cur)? {
                    refs.push((p, parent.clone(), "a parent declaration".into()));
                    decl.parents.insert(parent);
                }
            }
            cur.eat(&Tok::Assign);
            if cur.peek() == &Tok::LBrace {
                decl.attrs = attr_block(&mut cur, &mut refs)?;
            }
            cur.expect(&Tok::Semi)?;
            for (p, name) in names {
                if name == ACTION_TYPE {
                    return Err(SchemaError::Invalid {
                        pos: p,
                        msg: format!("`{ACTION_TYPE}` is reserved for action entities"),
                    });
                }
                let name = EntityTypeName::new(name);
                if schema.entity_types.contains_key(&name) {
                    return Err(SchemaError::Duplicate {
                        pos: p,
                        what: format!("entity type `{name}`"),
                    });
                }
                schema.entity_types.insert(name, decl.clone());
            }
        } else if cur.eat_keyword("action") {
            let mut names = vec![(cur.pos(), action_name(&mut cur)?)];
            while cur.eat(&Tok::Comma) {
                names.push((cur.pos(), action_name(&mut cur)?));
            }
            let mut decl = ActionDecl::default();
            if cur.eat_keyword("appliesTo") {
                cur.expect(&Tok::LBrace)?;
                let mut seen = BTreeSet::new();
                while cur.peek() != &Tok::RBrace {
                    let kpos = cur.pos();
                    let key = cur.expect_ident()?;
                    if !seen.insert(key.clone()) {
                        return Err(SchemaError::Duplicate {
                            pos: kpos,
                            what: format!("`{key}` in appliesTo"),
                        });
                    }
                    cur.expect(&Tok::Colon)?;
                    match key.as_str() {
                        "principal" | "resource" => {
                            let mut set = BTreeSet::new();
                            for (p, t) in type_list(&mut cur)? {
                                refs.push((p, t.clone(), format!("appliesTo {key}")));
                                set.insert(t);
                            }
                            if key == "principal" {
                                decl.principal_types = set;
                            } else {
                                decl.resource_types = set;
                            }
                        }
                        "context" => decl.context = attr_block(&mut cur, &mut refs)?,
                        _ => {
                            return Err(SchemaError::Invalid {
                                pos: kpos,
                                msg: format!("unknown appliesTo key `{key}`"),
                            })
                        }
                    }
                    if !cur.eat(&Tok::Comma) {
                        break;
                    }
                }
                cur.expect(&Tok::RBrace)?;
            }
            cur.expect(&Tok::Semi)?;
            for (p, name) in names {
                if schema.actions.contains_key(&name) {
                    return Err(SchemaError::Duplicate {
                        pos: p,
                        what: format!("action `{}`", name.as_str()),
                    });
                }
                schema.actions.insert(name, decl.clone());
            }
        } else {
            return Err(ParseError::new(pos, format!("expected `entity` or `action`, found {}", cur.peek())).into());
        }
    }

    for (pos, name, context) in refs {
        if !schema.entity_types.contains_key(&name) {
            return Err(SchemaError::UnknownType {
                pos,
                name: name.to_string(),
                context,
            });
        }
    }
    Ok(schema)
}

fn action_name(cur: &mut Cursor) -> Result<ActionName, ParseError> {
    match cur.peek().clone() {
        Tok::Str(s) => {
            cur.next();
            Ok(ActionName::new(s))
        }
        Tok::Ident(s) => {
            cur.next();
            Ok(ActionName::new(s))
        }
        _ => Err(cur.unexpected("action name")),
    }
}

fn type_name(cur: &mut Cursor) -> Result<(Pos, EntityTypeName), ParseError> {
    let pos = cur.pos();
    let mut name = cur.expect_ident()?;
    while cur.peek() == &Tok::PathSep && matches!(cur.peek_at(1), Tok::Ident(_)) {
        cur.next();
        name.push_str("::");
        name.push_str(&cur.expect_ident()?);
    }
    Ok((pos, EntityTypeName::new(name)))
}

fn type_list(cur: &mut Cursor) -> Result<Vec<(Pos, EntityTypeName)>, ParseError> {
    if cur.eat(&Tok::LBracket) {
        let mut out = Vec::new();
        while cur.peek() != &Tok::RBracket {
            out.push(type_name(cur)?);
            if !cur.eat(&Tok::Comma) {
                break;
            }
        }
        cur.expect(&Tok::RBracket)?;
        Ok(out)
    } else {
        Ok(vec![type_name(cur)?])
    }
}

fn attr_block(
    cur: &mut Cursor,
    refs: &mut Vec<(Pos, EntityTypeName, String)>,
) -> Result<BTreeMap<AttrName, AttrDecl>, SchemaError> {
    cur.expect(&Tok::LBrace)?;
    let mut attrs = BTreeMap::new();
    while cur.peek() != &Tok::RBrace {
        let pos = cur.pos();
        let name = match cur.next() {
            Tok::Ident(s) | Tok::Str(s) => s,
            other => {
                return Err(ParseError::new(pos, format!("expected attribute name, found {other}")).into())
            }
        };
        let optional = cur.eat(&Tok::Question);
        cur.expect(&Tok::Colon)?;
        let ty = attr_type(cur, refs, &name)?;
        if attrs
            .insert(AttrName::new(&name), AttrDecl { ty, optional })
            .is_some()
        {
            return Err(SchemaError::Duplicate {
                pos,
                what: format!("attribute `{name}`"),
            });
        }
        if !cur.eat(&Tok::Comma) {
            break;
        }
    }
    cur.expect(&Tok::RBrace)?;
    Ok(attrs)
}

fn attr_type(
    cur: &mut Cursor,
    refs: &mut Vec<(Pos, EntityTypeName, String)>,
    attr: &str,
) -> Result<AttrType, SchemaError> {
    if cur.peek() == &Tok::LBrace {
        return Err(SchemaError::Invalid {
            pos: cur.pos(),
            msg: format!("record-typed attribute `{attr}` is not supported"),
        });
    }
    let (pos, name) = type_name(cur)?;
    Ok(match name.as_str() {
        "Bool" | "Boolean" => AttrType::Bool,
        "Long" | "Int" => AttrType::Long,
        "String" => AttrType::String,
        "Set" => {
            cur.expect(&Tok::Lt)?;
            let elem = attr_type(cur, refs, attr)?;
            cur.expect(&Tok::Gt)?;
            AttrType::Set(Box::new(elem))
        }
        _ => {
            refs.push((pos, name.clone(), format!("attribute `{attr}`")));
            AttrType::Entity(name)
        }
    })
}
