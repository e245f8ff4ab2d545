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

//! Seeded generation of nested entity stores and access logs.
//!
//! Every entity is a pure function of the seed, its group and its index, and
//! only refers to entities that exist at every size where it exists. Stores
//! of smaller sizes are therefore subsets of larger ones. Logs are grown
//! incrementally over ascending sizes so they nest as well.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use super::spec::{AttrGen, GroupSpec, StudySpec};
use crate::access_log::AccessLog;
use crate::model::{policy_eval, AttrName, Decision, Entity, EntityError, EntityStore, EntityTypeName, EntityUid, Request, Value};
use crate::space::{enumerate_requests, policy_denotation};

#[derive(Debug, Error)]
pub enum GenError {
    #[error("density {0} is outside 0..=100")]
    Density(u32),
    #[error("sizes must be non-empty, positive and strictly ascending")]
    Sizes,
    #[error("density {density} is infeasible at size {size}: the tight policy permits nothing")]
    Infeasible { size: usize, density: u32 },
    #[error("{group}[{index}].{attr}: no value to draw from")]
    EmptyPool { group: String, index: usize, attr: String },
    #[error(transparent)]
    Entity(#[from] EntityError),
    #[error("cannot write {path}: {source}")]
    Io { path: String, source: io::Error },
}

/// One size of a family.
#[derive(Debug, Clone)]
pub struct FamilyMember {
    pub size: usize,
    pub store: EntityStore,
    pub log: AccessLog,
    /// `|[[P_tight]]|` over this store.
    pub tight_permitted: usize,
    pub allowed: usize,
    pub denied: usize,
}

#[derive(Debug, Clone)]
pub struct DatasetFamily {
    pub seed: u64,
    pub density: u32,
    pub members: Vec<FamilyMember>,
}

/// FNV-1a over the seed and a list of labels.
pub(crate) fn mix(seed: u64, labels: &[&[u8]]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in seed.to_le_bytes().iter().chain(labels.iter().flat_map(|l| l.iter().chain(&[0xff]))) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

struct Generated<'a> {
    spec: &'a StudySpec,
    /// Per group, in spec order.
    entities: Vec<Vec<(EntityUid, Entity)>>,
    lookup: HashMap<EntityUid, (usize, usize)>,
}

impl Generated<'_> {
    fn group_index(&self, name: &str) -> usize {
        self.spec.groups.iter().position(|g| g.name == name).expect("validated group")
    }

    /// Members of `group` that exist at size `birth`.
    fn pool(&self, group: &str, birth: usize) -> &[(EntityUid, Entity)] {
        let gi = self.group_index(group);
        let n = self.spec.groups[gi].count(birth).min(self.entities[gi].len());
        &self.entities[gi][..n]
    }

    fn entity(&self, uid: &EntityUid) -> Option<&Entity> {
        self.lookup.get(uid).map(|(g, i)| &self.entities[*g][*i].1)
    }
}

fn draw_subset(rng: &mut ChaCha8Rng, pool: &[&EntityUid], min: usize, max: usize, forced: Option<&EntityUid>) -> BTreeSet<Value> {
    let k = rng.gen_range(min..=max);
    let mut order = pool.to_vec();
    order.shuffle(rng);
    let mut out: BTreeSet<Value> = forced.map(|u| Value::Entity(u.clone())).into_iter().collect();
    for u in order {
        if out.len() >= k {
            break;
        }
        out.insert(Value::Entity(u.clone()));
    }
    out
}

fn gen_entity(g: &GroupSpec, gi: usize, index: usize, seed: u64, done: &Generated<'_>) -> Result<(EntityUid, Entity), GenError> {
    let schema = &done.spec.schema;
    let ty = EntityTypeName::new(&g.entity_type);
    let uid = EntityUid::new(ty.clone(), format!("{}{index}", g.prefix()));
    let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, &[g.name.as_bytes(), &(index as u64).to_le_bytes(), &[gi as u8]]));
    let birth = g.birth_size(index);
    let mut attrs: BTreeMap<AttrName, Value> = BTreeMap::new();
    let empty = |attr: &str| GenError::EmptyPool {
        group: g.name.clone(),
        index,
        attr: attr.to_string(),
    };
    for a in &g.attrs {
        let name = AttrName::new(&a.name);
        let present = a.presence.is_none_or(|p| rng.gen_bool(p.clamp(0.0, 1.0)));
        let optional = schema.attr(&ty, &name).is_some_and(|d| d.optional);
        if !present && optional {
            continue;
        }
        let value = match &a.gen {
            AttrGen::Bool { p } => Some(Value::Bool(rng.gen_bool(p.clamp(0.0, 1.0)))),
            AttrGen::Int { min, max } => Some(Value::Long(rng.gen_range(*min..=*max))),
            AttrGen::Ref { group } => done.pool(group, birth).choose(&mut rng).map(|(u, _)| Value::Entity(u.clone())),
            AttrGen::Cycle { group } => {
                let pool = done.pool(group, birth);
                (!pool.is_empty()).then(|| Value::Entity(pool[index % pool.len()].0.clone()))
            }
            AttrGen::Subset {
                group,
                min,
                max,
                include_cycle,
                where_eq,
            } => {
                let pool = done.pool(group, birth);
                let qualifies = |e: &Entity| match where_eq {
                    Some([theirs, mine]) => {
                        let mine = attrs.get(&AttrName::new(mine));
                        mine.is_some() && e.attrs.get(&AttrName::new(theirs)) == mine
                    }
                    None => true,
                };
                let eligible: Vec<&EntityUid> = pool.iter().filter(|(_, e)| qualifies(e)).map(|(u, _)| u).collect();
                let forced = if *include_cycle && !pool.is_empty() {
                    Some(&pool[index % pool.len()].0)
                } else {
                    None
                };
                Some(Value::Set(draw_subset(&mut rng, &eligible, *min, *max, forced)))
            }
            AttrGen::Pick { path } => {
                let mut cur = path.first().and_then(|p| attrs.get(&AttrName::new(p))).cloned();
                for step in path.iter().skip(1) {
                    cur = match &cur {
                        Some(Value::Entity(u)) => done.entity(u).and_then(|e| e.attrs.get(&AttrName::new(step))).cloned(),
                        _ => None,
                    };
                }
                match cur {
                    Some(Value::Set(s)) => {
                        let elems: Vec<Value> = s.into_iter().collect();
                        elems.choose(&mut rng).cloned()
                    }
                    other => other,
                }
            }
        };
        match value {
            Some(v) => {
                attrs.insert(name, v);
            }
            None if optional => {}
            None => return Err(empty(&a.name)),
        }
    }
    let parents = match &g.parents {
        Some(p) => {
            let pool: Vec<&EntityUid> = done.pool(&p.group, birth).iter().map(|(u, _)| u).collect();
            draw_subset(&mut rng, &pool, p.min, p.max, None)
                .into_iter()
                .filter_map(|v| v.as_entity().cloned())
                .collect()
        }
        None => BTreeSet::new(),
    };
    Ok((uid, Entity { attrs, parents }))
}

/// All entities up to `max_size`, grouped in spec order.
fn gen_entities(spec: &StudySpec, seed: u64, max_size: usize) -> Result<Generated<'_>, GenError> {
    let mut done = Generated {
        spec,
        entities: Vec::new(),
        lookup: HashMap::new(),
    };
    for (gi, g) in spec.groups.iter().enumerate() {
        let mut items = Vec::with_capacity(g.count(max_size));
        for i in 0..g.count(max_size) {
            items.push(gen_entity(g, gi, i, seed, &done)?);
        }
        for (i, (u, _)) in items.iter().enumerate() {
            done.lookup.insert(u.clone(), (gi, i));
        }
        done.entities.push(items);
    }
    Ok(done)
}

/// The store of one size. Entities are independent of the other sizes.
pub fn generate_store(spec: &StudySpec, seed: u64, size: usize) -> Result<EntityStore, GenError> {
    let done = gen_entities(spec, seed, size)?;
    store_at(&done, size)
}

fn store_at(done: &Generated<'_>, size: usize) -> Result<EntityStore, GenError> {
    let items = done
        .spec
        .groups
        .iter()
        .zip(&done.entities)
        .flat_map(|(g, es)| es[..g.count(size)].iter().cloned());
    Ok(EntityStore::from_entities(items, &done.spec.schema)?)
}

/// `k` more requests from `pool` that are not in `have`, by seeded shuffle.
fn sample_more(pool: &[Request], have: &BTreeSet<Request>, k: usize, seed: u64) -> Vec<Request> {
    let mut fresh: Vec<&Request> = pool.iter().filter(|r| !have.contains(*r)).collect();
    fresh.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    fresh.into_iter().take(k).cloned().collect()
}

/// A family of stores and logs over ascending `sizes`.
///
/// At each size the allowed entries are `round(density% * |[[P_tight]]|)`
/// requests the tight policy permits, and the denied entries are as many
/// requests the loose policy denies (fewer if not enough exist).
pub fn generate_family(spec: &StudySpec, seed: u64, sizes: &[usize], density: u32) -> Result<DatasetFamily, GenError> {
    if density > 100 {
        return Err(GenError::Density(density));
    }
    if sizes.is_empty() || sizes[0] == 0 || sizes.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GenError::Sizes);
    }
    let done = gen_entities(spec, seed, *sizes.last().expect("non-empty"))?;
    let mut allowed: BTreeSet<Request> = BTreeSet::new();
    let mut denied: BTreeSet<Request> = BTreeSet::new();
    let mut members = Vec::with_capacity(sizes.len());
    for &size in sizes {
        let store = store_at(&done, size)?;
        let tight = policy_denotation(&spec.p_tight, &spec.schema, &store);
        if tight.is_empty() && density > 0 {
            return Err(GenError::Infeasible { size, density });
        }
        let want = (u64::from(density) * tight.len() as u64 + 50) / 100;
        let want = want as usize;
        let size_tag = (size as u64).to_le_bytes();
        let extra = sample_more(&tight, &allowed, want.saturating_sub(allowed.len()), mix(seed, &[b"allowed", &size_tag, &density.to_le_bytes()]));
        allowed.extend(extra);
        let loose_denied: Vec<Request> = enumerate_requests(&spec.schema, &store, None)
            .into_iter()
            .filter(|r| policy_eval(r, &spec.p_init, &store) == Decision::Denied)
            .collect();
        let extra = sample_more(&loose_denied, &denied, want.saturating_sub(denied.len()), mix(seed, &[b"denied", &size_tag, &density.to_le_bytes()]));
        denied.extend(extra);
        let mut log = AccessLog::new();
        for r in &allowed {
            log.insert(r.clone(), Decision::Allowed).expect("fresh log");
        }
        for r in &denied {
            log.insert(r.clone(), Decision::Denied).expect("disjoint from allowed");
        }
        members.push(FamilyMember {
            size,
            store,
            log,
            tight_permitted: tight.len(),
            allowed: allowed.len(),
            denied: denied.len(),
        });
    }
    Ok(DatasetFamily { seed, density, members })
}

impl DatasetFamily {
    /// Write `schema.cedarschema`, `tight.cedar`, `init.cedar` and, per
    /// size, `size-<n>/entities.json` and `size-<n>/log.jsonl`.
    pub fn write_to(&self, spec: &StudySpec, dir: &Path) -> Result<(), GenError> {
        let write = |p: &Path, text: &str| {
            fs::write(p, text).map_err(|source| GenError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        let mkdir = |p: &Path| {
            fs::create_dir_all(p).map_err(|source| GenError::Io {
                path: p.display().to_string(),
                source,
            })
        };
        mkdir(dir)?;
        write(&dir.join("schema.cedarschema"), &spec.schema_text)?;
        write(&dir.join("tight.cedar"), &spec.p_tight.to_string())?;
        write(&dir.join("init.cedar"), &spec.p_init.to_string())?;
        for m in &self.members {
            let sub = dir.join(format!("size-{}", m.size));
            mkdir(&sub)?;
            write(&sub.join("entities.json"), &m.store.to_json_string())?;
            write(&sub.join("log.jsonl"), &m.log.to_jsonl())?;
        }
        Ok(())
    }
}
