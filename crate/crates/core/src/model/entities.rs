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

//! Concrete entity stores.
//!
//! The on-disk format is a JSON array of records
//! `{"uid": {"type", "id"}, "attrs": {..}, "parents": [{"type", "id"}, ..]}`.
//! Attribute values are decoded against the schema: entity references are
//! `{"type", "id"}` objects (the `{"__entity": {..}}` wrapper is also
//! accepted) and sets are JSON arrays.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use fixedbitset::FixedBitSet;
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use super::schema::{AttrDecl, Schema};
use super::types::{AttrName, AttrType, EntityTypeName, EntityUid, Value};

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Entity {
    pub attrs: BTreeMap<AttrName, Value>,
    pub parents: BTreeSet<EntityUid>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EntityError {
    #[error("malformed entity document: {0}")]
    Malformed(String),
    #[error("entity {uid}: unknown entity type")]
    UnknownType { uid: String },
    #[error("duplicate entity {uid}")]
    Duplicate { uid: String },
    #[error("entity {uid}: missing mandatory attribute `{attr}`")]
    MissingAttribute { uid: String, attr: String },
    #[error("entity {uid}: undeclared attribute `{attr}`")]
    UndeclaredAttribute { uid: String, attr: String },
    #[error("entity {uid}: attribute `{attr}` expected {expected}, found {found}")]
    TypeMismatch {
        uid: String,
        attr: String,
        expected: String,
        found: String,
    },
    #[error("entity {uid}: attribute `{attr}` references unknown entity {target}")]
    DanglingReference {
        uid: String,
        attr: String,
        target: String,
    },
    #[error("entity {uid}: parent {parent} is not in the store")]
    DanglingParent { uid: String, parent: String },
    #[error("entity {uid}: parent {parent} has a type not declared as a parent type")]
    InvalidParentType { uid: String, parent: String },
}

/// A validated entity store with its ancestor closure.
///
/// Entities are interned to dense indices in uid order; `ancestors[i]` is the
/// set of indices `j` with `(i, j)` in the reflexive transitive closure of
/// the parent relation.
#[derive(Debug, Clone, Default)]
pub struct EntityStore {
    uids: Vec<EntityUid>,
    records: Vec<Entity>,
    index: HashMap<EntityUid, u32>,
    ancestors: Vec<FixedBitSet>,
    by_type: BTreeMap<EntityTypeName, Vec<u32>>,
}

impl PartialEq for EntityStore {
    fn eq(&self, other: &Self) -> bool {
        self.uids == other.uids && self.records == other.records
    }
}

impl EntityStore {
    /// Build and validate a store from already-decoded entities.
    pub fn from_entities(
        entities: impl IntoIterator<Item = (EntityUid, Entity)>,
        schema: &Schema,
    ) -> Result<Self, EntityError> {
        let mut map: BTreeMap<EntityUid, Entity> = BTreeMap::new();
        for (uid, e) in entities {
            if map.contains_key(&uid) {
                return Err(EntityError::Duplicate {
                    uid: uid.to_string(),
                });
            }
            map.insert(uid, e);
        }
        for (uid, e) in &map {
            validate_entity(uid, e, &map, schema)?;
        }
        Ok(Self::build(map))
    }

    fn build(map: BTreeMap<EntityUid, Entity>) -> Self {
        let mut uids = Vec::with_capacity(map.len());
        let mut records = Vec::with_capacity(map.len());
        for (uid, e) in map {
            uids.push(uid);
            records.push(e);
        }
        let index: HashMap<EntityUid, u32> = uids
            .iter()
            .enumerate()
            .map(|(i, u)| (u.clone(), i as u32))
            .collect();
        let mut by_type: BTreeMap<EntityTypeName, Vec<u32>> = BTreeMap::new();
        for (i, uid) in uids.iter().enumerate() {
            by_type.entry(uid.entity_type().clone()).or_default().push(i as u32);
        }
        let parents: Vec<Vec<u32>> = records
            .iter()
            .map(|e| e.parents.iter().filter_map(|p| index.get(p).copied()).collect())
            .collect();
        let ancestors = closure(&parents);
        Self {
            uids,
            records,
            index,
            ancestors,
            by_type,
        }
    }

    pub fn len(&self) -> usize {
        self.uids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.uids.is_empty()
    }

    pub fn uids(&self) -> &[EntityUid] {
        &self.uids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&EntityUid, &Entity)> {
        self.uids.iter().zip(self.records.iter())
    }

    pub fn index_of(&self, uid: &EntityUid) -> Option<u32> {
        self.index.get(uid).copied()
    }

    pub fn uid_at(&self, idx: u32) -> &EntityUid {
        &self.uids[idx as usize]
    }

    pub fn get(&self, uid: &EntityUid) -> Option<&Entity> {
        self.index_of(uid).map(|i| &self.records[i as usize])
    }

    pub fn contains(&self, uid: &EntityUid) -> bool {
        self.index.contains_key(uid)
    }

    /// Entities of `ty`, ordered by id.
    pub fn of_type<'a>(&'a self, ty: &EntityTypeName) -> impl Iterator<Item = &'a EntityUid> + 'a {
        self.by_type
            .get(ty)
            .into_iter()
            .flatten()
            .map(move |&i| &self.uids[i as usize])
    }

    pub fn count_of_type(&self, ty: &EntityTypeName) -> usize {
        self.by_type.get(ty).map_or(0, Vec::len)
    }

    /// `a in b`: `(a, b)` is in the reflexive transitive closure. Equal uids
    /// are related even when absent from the store.
    pub fn is_descendant(&self, a: &EntityUid, b: &EntityUid) -> bool {
        if a == b {
            return true;
        }
        match (self.index_of(a), self.index_of(b)) {
            (Some(i), Some(j)) => self.ancestors[i as usize].contains(j as usize),
            _ => false,
        }
    }

    /// All closure pairs `(descendant, ancestor)`, reflexive pairs included.
    pub fn closure_pairs(&self) -> impl Iterator<Item = (&EntityUid, &EntityUid)> {
        self.ancestors.iter().enumerate().flat_map(move |(i, set)| {
            set.ones()
                .map(move |j| (&self.uids[i], &self.uids[j]))
        })
    }

    /// Parse a JSON entity document and validate it against `schema`.
    pub fn from_json_str(text: &str, schema: &Schema) -> Result<Self, EntityError> {
        let doc: Json =
            serde_json::from_str(text).map_err(|e| EntityError::Malformed(e.to_string()))?;
        let items = doc
            .as_array()
            .ok_or_else(|| EntityError::Malformed("expected a JSON array of entities".into()))?;
        let mut entities = Vec::with_capacity(items.len());
        for item in items {
            entities.push(decode_entity(item, schema)?);
        }
        Self::from_entities(entities, schema)
    }

    /// Serialize to the JSON entity document format, in uid order.
    pub fn to_json(&self) -> Json {
        Json::Array(
            self.iter()
                .map(|(uid, e)| {
                    let attrs: Map<String, Json> = e
                        .attrs
                        .iter()
                        .map(|(k, v)| (k.to_string(), value_to_json(v)))
                        .collect();
                    json!({
                        "uid": uid_to_json(uid),
                        "attrs": attrs,
                        "parents": e.parents.iter().map(uid_to_json).collect::<Vec<_>>(),
                    })
                })
                .collect(),
        )
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_json()).expect("entity json");
        s.push('\n');
        s
    }
}

pub fn parse_entities(text: &str, schema: &Schema) -> Result<EntityStore, EntityError> {
    EntityStore::from_json_str(text, schema)
}

/// Reflexive transitive closure by DFS from every node; handles cycles.
fn closure(parents: &[Vec<u32>]) -> Vec<FixedBitSet> {
    let n = parents.len();
    let mut out = Vec::with_capacity(n);
    let mut stack = Vec::new();
    for start in 0..n {
        let mut seen = FixedBitSet::with_capacity(n);
        seen.insert(start);
        stack.push(start as u32);
        while let Some(v) = stack.pop() {
            for &p in &parents[v as usize] {
                if !seen.put(p as usize) {
                    stack.push(p);
                }
            }
        }
        out.push(seen);
    }
    out
}

fn validate_entity(
    uid: &EntityUid,
    e: &Entity,
    all: &BTreeMap<EntityUid, Entity>,
    schema: &Schema,
) -> Result<(), EntityError> {
    let decl = schema
        .entity_type(uid.entity_type())
        .ok_or_else(|| EntityError::UnknownType {
            uid: uid.to_string(),
        })?;
    for (name, AttrDecl { ty, optional }) in &decl.attrs {
        match e.attrs.get(name) {
            None if *optional => {}
            None => {
                return Err(EntityError::MissingAttribute {
                    uid: uid.to_string(),
                    attr: name.to_string(),
                })
            }
            Some(v) => {
                if !v.has_type(ty) {
                    return Err(EntityError::TypeMismatch {
                        uid: uid.to_string(),
                        attr: name.to_string(),
                        expected: ty.to_string(),
                        found: v.to_string(),
                    });
                }
                check_refs(uid, name, v, all)?;
            }
        }
    }
    for name in e.attrs.keys() {
        if !decl.attrs.contains_key(name) {
            return Err(EntityError::UndeclaredAttribute {
                uid: uid.to_string(),
                attr: name.to_string(),
            });
        }
    }
    for p in &e.parents {
        if !decl.parents.contains(p.entity_type()) {
            return Err(EntityError::InvalidParentType {
                uid: uid.to_string(),
                parent: p.to_string(),
            });
        }
        if !all.contains_key(p) {
            return Err(EntityError::DanglingParent {
                uid: uid.to_string(),
                parent: p.to_string(),
            });
        }
    }
    Ok(())
}

fn check_refs(
    uid: &EntityUid,
    attr: &AttrName,
    v: &Value,
    all: &BTreeMap<EntityUid, Entity>,
) -> Result<(), EntityError> {
    match v {
        Value::Entity(target) if !all.contains_key(target) => Err(EntityError::DanglingReference {
            uid: uid.to_string(),
            attr: attr.to_string(),
            target: target.to_string(),
        }),
        Value::Set(elems) => elems.iter().try_for_each(|x| check_refs(uid, attr, x, all)),
        _ => Ok(()),
    }
}

fn decode_entity(item: &Json, schema: &Schema) -> Result<(EntityUid, Entity), EntityError> {
    let obj = item
        .as_object()
        .ok_or_else(|| EntityError::Malformed("entity record must be an object".into()))?;
    let uid = uid_from_json(
        obj.get("uid")
            .ok_or_else(|| EntityError::Malformed("entity record without `uid`".into()))?,
    )?;
    let decl = schema
        .entity_type(uid.entity_type())
        .ok_or_else(|| EntityError::UnknownType {
            uid: uid.to_string(),
        })?;
    let mut entity = Entity::default();
    if let Some(attrs) = obj.get("attrs") {
        let attrs = attrs
            .as_object()
            .ok_or_else(|| EntityError::Malformed(format!("{uid}: `attrs` must be an object")))?;
        for (k, v) in attrs {
            let name = AttrName::new(k);
            let ad = decl
                .attrs
                .get(&name)
                .ok_or_else(|| EntityError::UndeclaredAttribute {
                    uid: uid.to_string(),
                    attr: k.clone(),
                })?;
            let value = value_from_json(v, &ad.ty).ok_or_else(|| EntityError::TypeMismatch {
                uid: uid.to_string(),
                attr: k.clone(),
                expected: ad.ty.to_string(),
                found: v.to_string(),
            })?;
            entity.attrs.insert(name, value);
        }
    }
    if let Some(parents) = obj.get("parents") {
        let parents = parents
            .as_array()
            .ok_or_else(|| EntityError::Malformed(format!("{uid}: `parents` must be an array")))?;
        for p in parents {
            entity.parents.insert(uid_from_json(p)?);
        }
    }
    Ok((uid, entity))
}

pub fn uid_from_json(v: &Json) -> Result<EntityUid, EntityError> {
    let v = v.get("__entity").unwrap_or(v);
    let ty = v.get("type").and_then(Json::as_str);
    let id = v.get("id").and_then(Json::as_str);
    match (ty, id) {
        (Some(ty), Some(id)) => Ok(EntityUid::new(EntityTypeName::new(ty), id)),
        _ => Err(EntityError::Malformed(format!(
            "expected an entity reference {{\"type\", \"id\"}}, found {v}"
        ))),
    }
}

pub fn uid_to_json(uid: &EntityUid) -> Json {
    json!({ "type": uid.entity_type().as_str(), "id": uid.id() })
}

/// Decode a JSON value against a declared type; `None` on mismatch.
pub fn value_from_json(v: &Json, ty: &AttrType) -> Option<Value> {
    match ty {
        AttrType::Bool => v.as_bool().map(Value::Bool),
        AttrType::Long => v.as_i64().map(Value::Long),
        AttrType::String => v.as_str().map(Value::string),
        AttrType::Entity(t) => {
            let uid = uid_from_json(v).ok()?;
            (uid.entity_type() == t).then_some(Value::Entity(uid))
        }
        AttrType::Set(elem) => v
            .as_array()?
            .iter()
            .map(|x| value_from_json(x, elem))
            .collect::<Option<BTreeSet<_>>>()
            .map(Value::Set),
    }
}

pub fn value_to_json(v: &Value) -> Json {
    match v {
        Value::Bool(b) => Json::Bool(*b),
        Value::Long(i) => json!(i),
        Value::String(s) => Json::String(s.to_string()),
        Value::Entity(uid) => uid_to_json(uid),
        Value::Set(elems) => Json::Array(elems.iter().map(value_to_json).collect()),
    }
}
