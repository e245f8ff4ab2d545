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

//! Names, entity identifiers, attribute types and runtime values.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

/// The reserved entity type of action entities (`Action::"Read"`).
pub const ACTION_TYPE: &str = "Action";

/// Name of an entity type, e.g. `User`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityTypeName(Arc<str>);

impl EntityTypeName {
    pub fn new(name: impl AsRef<str>) -> Self {
        Self(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn action() -> Self {
        Self::new(ACTION_TYPE)
    }

    pub fn is_action(&self) -> bool {
        &*self.0 == ACTION_TYPE
    }
}

impl fmt::Display for EntityTypeName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Attribute (or context field) name.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct AttrName(Arc<str>);

impl AttrName {
    pub fn new(name: impl AsRef<str>) -> Self {
        Self(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for AttrName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Action name as declared in the schema (`Read` for `Action::"Read"`).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ActionName(Arc<str>);

impl ActionName {
    pub fn new(name: impl AsRef<str>) -> Self {
        Self(Arc::from(name.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn uid(&self) -> EntityUid {
        EntityUid::new(EntityTypeName::action(), self.as_str())
    }
}

impl fmt::Display for ActionName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{ACTION_TYPE}::{}", quote(&self.0))
    }
}

/// A concrete entity reference: type plus id string.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityUid {
    ty: EntityTypeName,
    id: Arc<str>,
}

impl EntityUid {
    pub fn new(ty: EntityTypeName, id: impl AsRef<str>) -> Self {
        Self {
            ty,
            id: Arc::from(id.as_ref()),
        }
    }

    pub fn entity_type(&self) -> &EntityTypeName {
        &self.ty
    }

    pub fn id(&self) -> &str {
        &self.id
    }
}

impl fmt::Display for EntityUid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}::{}", self.ty, quote(&self.id))
    }
}

/// Quote a string using Cedar's string-literal escapes.
pub fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

/// Declared type of an attribute or context field.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum AttrType {
    Bool,
    Long,
    String,
    Entity(EntityTypeName),
    Set(Box<AttrType>),
}

impl AttrType {
    pub fn entity_type(&self) -> Option<&EntityTypeName> {
        match self {
            AttrType::Entity(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for AttrType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AttrType::Bool => f.write_str("Bool"),
            AttrType::Long => f.write_str("Long"),
            AttrType::String => f.write_str("String"),
            AttrType::Entity(t) => write!(f, "{t}"),
            AttrType::Set(t) => write!(f, "Set<{t}>"),
        }
    }
}

/// Runtime value. Equality and ordering are structural.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Value {
    Bool(bool),
    Long(i64),
    String(Arc<str>),
    Entity(EntityUid),
    Set(BTreeSet<Value>),
}

impl Value {
    pub fn string(s: impl AsRef<str>) -> Self {
        Value::String(Arc::from(s.as_ref()))
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    pub fn as_entity(&self) -> Option<&EntityUid> {
        match self {
            Value::Entity(e) => Some(e),
            _ => None,
        }
    }

    /// Whether this value inhabits `ty`. The empty set inhabits every set type.
    pub fn has_type(&self, ty: &AttrType) -> bool {
        match (self, ty) {
            (Value::Bool(_), AttrType::Bool)
            | (Value::Long(_), AttrType::Long)
            | (Value::String(_), AttrType::String) => true,
            (Value::Entity(uid), AttrType::Entity(t)) => uid.entity_type() == t,
            (Value::Set(elems), AttrType::Set(elem_ty)) => elems.iter().all(|v| v.has_type(elem_ty)),
            _ => false,
        }
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Long(i) => write!(f, "{i}"),
            Value::String(s) => f.write_str(&quote(s)),
            Value::Entity(uid) => write!(f, "{uid}"),
            Value::Set(elems) => {
                f.write_str("[")?;
                for (i, v) in elems.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
        }
    }
}
