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

//! Study specifications: a schema, a tight and a loosened policy, and the
//! recipe for generating entity stores of a given size.

use std::collections::BTreeSet;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::model::{parse_policy, parse_schema, AttrName, EntityTypeName, Policy, PolicyError, Schema, SchemaError};

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed study spec: {0}")]
    Toml(#[from] toml::de::Error),
    #[error("schema: {0}")]
    Schema(#[from] SchemaError),
    #[error("{which} policy: {source}")]
    Policy { which: &'static str, source: PolicyError },
    #[error("invalid study spec: {0}")]
    Invalid(String),
}

/// How one attribute value is drawn. `group` names refer to entity groups
/// declared earlier in the spec.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "gen", rename_all = "snake_case")]
pub enum AttrGen {
    /// `true` with probability `p`.
    Bool { p: f64 },
    /// Uniform in `min..=max`.
    Int { min: i64, max: i64 },
    /// Uniform member of the group.
    Ref { group: String },
    /// Member `i mod n` of the group, for the `i`-th entity.
    Cycle { group: String },
    /// Between `min` and `max` distinct members of the group. With
    /// `include_cycle`, member `i mod n` is always included. With
    /// `where_eq = [a, b]`, only members whose attribute `a` equals this
    /// entity's attribute `b` qualify.
    Subset {
        group: String,
        min: usize,
        max: usize,
        #[serde(default)]
        include_cycle: bool,
        #[serde(default)]
        where_eq: Option<[String; 2]>,
    },
    /// Uniform element of the set or entity reached by following `path` from
    /// this entity's already generated attributes.
    Pick { path: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct AttrSpec {
    pub name: String,
    /// Probability that an optional attribute is present. Defaults to 1.
    #[serde(default)]
    pub presence: Option<f64>,
    #[serde(flatten)]
    pub gen: AttrGen,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParentSpec {
    pub group: String,
    pub min: usize,
    pub max: usize,
}

/// A block of entities of one type whose count at size `n` is
/// `base + per_size * n`.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub name: String,
    #[serde(rename = "type")]
    pub entity_type: String,
    /// Prefix of entity ids; defaults to the group name.
    #[serde(default)]
    pub prefix: Option<String>,
    #[serde(default)]
    pub base: usize,
    #[serde(default)]
    pub per_size: usize,
    #[serde(default)]
    pub attrs: Vec<AttrSpec>,
    #[serde(default)]
    pub parents: Option<ParentSpec>,
}

impl GroupSpec {
    pub fn count(&self, size: usize) -> usize {
        self.base + self.per_size * size
    }

    pub fn prefix(&self) -> &str {
        self.prefix.as_deref().unwrap_or(&self.name)
    }

    /// The smallest size (at least 1) at which entity `i` exists.
    pub fn birth_size(&self, i: usize) -> usize {
        if i < self.base {
            1
        } else {
            (i + 1 - self.base).div_ceil(self.per_size).max(1)
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSpec {
    name: String,
    schema: String,
    tight: String,
    init: String,
    groups: Vec<GroupSpec>,
}

/// A parsed and validated study specification.
#[derive(Debug, Clone)]
pub struct StudySpec {
    pub name: String,
    pub schema_text: String,
    pub schema: Schema,
    pub p_tight: Policy,
    pub p_init: Policy,
    pub groups: Vec<GroupSpec>,
}

impl StudySpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SpecError> {
        let raw: RawSpec = toml::from_str(text)?;
        let schema = parse_schema(&raw.schema)?;
        let p_tight = parse_policy(&raw.tight, &schema).map_err(|source| SpecError::Policy { which: "tight", source })?;
        let p_init = parse_policy(&raw.init, &schema).map_err(|source| SpecError::Policy { which: "init", source })?;
        let spec = StudySpec {
            name: raw.name,
            schema_text: raw.schema,
            schema,
            p_tight,
            p_init,
            groups: raw.groups,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self, SpecError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    pub fn group(&self, name: &str) -> Option<&GroupSpec> {
        self.groups.iter().find(|g| g.name == name)
    }

    /// Ids of rules whose body differs between the two policies.
    pub fn loosened(&self) -> Vec<String> {
        self.p_init
            .rules
            .iter()
            .zip(&self.p_tight.rules)
            .filter(|(i, t)| i.body != t.body)
            .map(|(i, _)| i.id.clone())
            .collect()
    }

    fn validate(&self) -> Result<(), SpecError> {
        let bad = |m: String| Err(SpecError::Invalid(m));
        if self.p_init.rules.len() != self.p_tight.rules.len() {
            return bad("init and tight policies differ in rule count".into());
        }
        for (i, t) in self.p_init.rules.iter().zip(&self.p_tight.rules) {
            if i.effect != t.effect || i.scope != t.scope {
                return bad(format!("rule {} has a different head in the two policies", i.id));
            }
            if i.effect == crate::model::Effect::Forbid && i.body != t.body {
                return bad(format!("forbid rule {} differs between the two policies", i.id));
            }
            // Dropping conjuncts: every conjunct of the init body is a
            // conjunct of the tight body.
            if let Some(ib) = &i.body {
                let tc: Vec<_> = t.body.iter().flat_map(|b| b.conjuncts()).collect();
                if !ib.conjuncts().iter().all(|c| tc.contains(c)) {
                    return bad(format!("rule {}: init body is not a subset of the tight conjuncts", i.id));
                }
            }
        }
        let mut seen: BTreeSet<&str> = BTreeSet::new();
        for g in &self.groups {
            if !seen.insert(&g.name) {
                return bad(format!("duplicate group `{}`", g.name));
            }
            let ty = EntityTypeName::new(&g.entity_type);
            let Some(decl) = self.schema.entity_type(&ty) else {
                return bad(format!("group `{}`: unknown entity type `{}`", g.name, g.entity_type));
            };
            if g.base == 0 && g.per_size == 0 {
                return bad(format!("group `{}` is always empty", g.name));
            }
            for a in &g.attrs {
                if !decl.attrs.contains_key(&AttrName::new(&a.name)) {
                    return bad(format!("group `{}`: unknown attribute `{}`", g.name, a.name));
                }
                let refd = match &a.gen {
                    AttrGen::Ref { group } | AttrGen::Cycle { group } | AttrGen::Subset { group, .. } => Some(group),
                    _ => None,
                };
                if let Some(r) = refd {
                    if !seen.contains(r.as_str()) || *r == g.name {
                        return bad(format!("group `{}`: attribute `{}` refers to `{r}`, which is not an earlier group", g.name, a.name));
                    }
                }
                if let AttrGen::Subset { min, max, .. } = &a.gen {
                    if min > max {
                        return bad(format!("group `{}`: attribute `{}` has min > max", g.name, a.name));
                    }
                }
            }
            for (name, d) in &decl.attrs {
                if !d.optional && !g.attrs.iter().any(|a| a.name == name.as_str()) {
                    return bad(format!("group `{}`: required attribute `{name}` has no generator", g.name));
                }
            }
            if let Some(p) = &g.parents {
                if !seen.contains(p.group.as_str()) || p.group == g.name {
                    return bad(format!("group `{}`: parents refer to `{}`, which is not an earlier group", g.name, p.group));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINI: &str = r#"
name = "mini"
schema = '''
entity Area;
entity User { pcMember?: Area };
entity Paper { area: Area };
action Read appliesTo { principal: User, resource: Paper };
'''
tight = '''permit (principal, action == Action::"Read", resource) when { principal has pcMember && principal.pcMember == resource.area };'''
init = '''permit (principal, action == Action::"Read", resource) when { principal has pcMember };'''

[[groups]]
name = "area"
type = "Area"
base = 2

[[groups]]
name = "user"
type = "User"
per_size = 2
attrs = [{ name = "pcMember", gen = "cycle", group = "area", presence = 0.5 }]

[[groups]]
name = "paper"
type = "Paper"
per_size = 3
attrs = [{ name = "area", gen = "ref", group = "area" }]
"#;

    #[test]
    fn loads_and_finds_loosened_rules() {
        let s = StudySpec::from_toml_str(MINI).unwrap();
        assert_eq!(s.loosened(), vec!["policy0".to_string()]);
        let u = s.group("user").unwrap();
        assert_eq!(u.count(5), 10);
        assert_eq!(u.prefix(), "user");
        assert_eq!(u.attrs[0].presence, Some(0.5));
        assert_eq!(u.attrs[0].gen, AttrGen::Cycle { group: "area".into() });
    }

    #[test]
    fn birth_sizes() {
        let g = GroupSpec {
            name: "g".into(),
            entity_type: "A".into(),
            prefix: None,
            base: 2,
            per_size: 3,
            attrs: vec![],
            parents: None,
        };
        // count(1) = 5, count(2) = 8
        assert_eq!(g.birth_size(0), 1);
        assert_eq!(g.birth_size(4), 1);
        assert_eq!(g.birth_size(5), 2);
        assert_eq!(g.birth_size(7), 2);
        assert_eq!(g.birth_size(8), 3);
        for i in 0..40 {
            let b = g.birth_size(i);
            assert!(i < g.count(b));
            assert!(b == 1 || i >= g.count(b - 1));
        }
    }

    #[test]
    fn rejects_bad_specs() {
        let fwd = MINI.replace("group = \"area\", presence", "group = \"paper\", presence");
        assert!(matches!(StudySpec::from_toml_str(&fwd), Err(SpecError::Invalid(_))));
        let missing = MINI.replace("attrs = [{ name = \"area\", gen = \"ref\", group = \"area\" }]", "");
        assert!(matches!(StudySpec::from_toml_str(&missing), Err(SpecError::Invalid(_))));
        let widened = MINI.replace("when { principal has pcMember };", "when { principal has pcMember && 1 == 1 };");
        assert!(matches!(StudySpec::from_toml_str(&widened), Err(SpecError::Invalid(_))));
        assert!(matches!(StudySpec::from_toml_str("name = 1"), Err(SpecError::Toml(_))));
    }
}
