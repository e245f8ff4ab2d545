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

//! Access logs: parsing, consistency checking and per-rule slices.
//!
//! A log file holds one JSON object per line:
//! `{"principal": "User::\"alice\"", "action": "Read", "resource": "Paper::\"p\"", "context": {..}, "decision": "allowed"}`.
//! The action may also be written as `Action::"Read"`. `context` is optional.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rayon::prelude::*;
use serde_json::{json, Map, Value as Json};
use thiserror::Error;

use crate::model::entities::{value_from_json, value_to_json};
use crate::model::{parse_uid, policy_eval, rule_applies, ActionName, AttrName, Decision, EntityStore, Policy, Request, Rule, Schema};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("line {line}: malformed entry: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("line {line}: unknown action `{action}`")]
    UnknownAction { line: usize, action: String },
    #[error("line {line}: invalid request: {msg}")]
    Invalid { line: usize, msg: String },
    #[error("line {line}: request {request} is already logged as {previous}")]
    Conflict {
        line: usize,
        request: String,
        previous: Decision,
    },
}

/// A set of labeled requests. A request appears at most once.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AccessLog {
    entries: BTreeMap<Request, Decision>,
}

impl AccessLog {
    pub fn new() -> Self {
        Self::default()
    }

    /// Insert an entry; a consistent duplicate is a no-op. On a conflicting
    /// label the previous decision is returned and the log is unchanged.
    pub fn insert(&mut self, req: Request, d: Decision) -> Result<(), Decision> {
        match self.entries.get(&req) {
            Some(prev) if *prev != d => Err(*prev),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(req, d);
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, req: &Request) -> Option<Decision> {
        self.entries.get(req).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Request, Decision)> {
        self.entries.iter().map(|(r, d)| (r, *d))
    }

    pub fn count(&self, d: Decision) -> usize {
        self.entries.values().filter(|x| **x == d).count()
    }

    /// One JSON object per line, in request order.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for (req, d) in &self.entries {
            out.push_str(&entry_to_json(req, *d).to_string());
            out.push('\n');
        }
        out
    }
}

impl FromIterator<(Request, Decision)> for AccessLog {
    /// Later conflicting entries are ignored.
    fn from_iter<I: IntoIterator<Item = (Request, Decision)>>(iter: I) -> Self {
        let mut log = AccessLog::new();
        for (r, d) in iter {
            let _ = log.insert(r, d);
        }
        log
    }
}

pub fn entry_to_json(req: &Request, d: Decision) -> Json {
    let mut obj = Map::new();
    obj.insert("principal".into(), json!(req.principal.to_string()));
    obj.insert("action".into(), json!(req.action.as_str()));
    obj.insert("resource".into(), json!(req.resource.to_string()));
    if !req.context.is_empty() {
        let ctx: Map<String, Json> = req
            .context
            .iter()
            .map(|(k, v)| (k.as_str().to_string(), value_to_json(v)))
            .collect();
        obj.insert("context".into(), Json::Object(ctx));
    }
    obj.insert("decision".into(), json!(d.to_string()));
    Json::Object(obj)
}

/// Check a request against the action's `appliesTo` and context shape.
pub fn validate_request(req: &Request, schema: &Schema) -> Result<(), String> {
    let decl = schema
        .action(&req.action)
        .ok_or_else(|| format!("unknown action {}", req.action))?;
    if !decl.principal_types.contains(req.principal.entity_type()) {
        return Err(format!("{} does not apply to principal {}", req.action, req.principal));
    }
    if !decl.resource_types.contains(req.resource.entity_type()) {
        return Err(format!("{} does not apply to resource {}", req.action, req.resource));
    }
    for (k, v) in &req.context {
        let d = decl
            .context
            .get(k)
            .ok_or_else(|| format!("context attribute `{k}` is not declared for {}", req.action))?;
        if !v.has_type(&d.ty) {
            return Err(format!("context attribute `{k}` expected {}, found {v}", d.ty));
        }
    }
    Ok(())
}

fn parse_line(line_no: usize, text: &str, schema: &Schema) -> Result<(Request, Decision), LogError> {
    let malformed = |msg: String| LogError::Malformed { line: line_no, msg };
    let v: Json = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let field = |name: &str| {
        v.get(name)
            .and_then(Json::as_str)
            .ok_or_else(|| malformed(format!("missing string field `{name}`")))
    };
    let uid = |name: &str| parse_uid(field(name)?).map_err(|e| malformed(format!("`{name}`: {e}")));
    let principal = uid("principal")?;
    let resource = uid("resource")?;
    let action_text = field("action")?;
    let action = match parse_uid(action_text) {
        Ok(u) if u.entity_type().is_action() => ActionName::new(u.id()),
        _ => ActionName::new(action_text),
    };
    let decl = schema.action(&action).ok_or_else(|| LogError::UnknownAction {
        line: line_no,
        action: action_text.to_string(),
    })?;
    let decision = match field("decision")? {
        "allowed" => Decision::Allowed,
        "denied" => Decision::Denied,
        other => return Err(malformed(format!("decision must be \"allowed\" or \"denied\", found {other:?}"))),
    };
    let mut context = BTreeMap::new();
    match v.get("context") {
        None | Some(Json::Null) => {}
        Some(Json::Object(m)) => {
            for (k, x) in m {
                let name = AttrName::new(k);
                let d = decl.context.get(&name).ok_or_else(|| LogError::Invalid {
                    line: line_no,
                    msg: format!("context attribute `{k}` is not declared for {action}"),
                })?;
                let val = value_from_json(x, &d.ty).ok_or_else(|| LogError::Invalid {
                    line: line_no,
                    msg: format!("context attribute `{k}` expected {}, found {x}", d.ty),
                })?;
                context.insert(name, val);
            }
        }
        Some(other) => return Err(malformed(format!("`context` must be an object, found {other}"))),
    }
    let req = Request {
        action,
        principal,
        resource,
        context,
    };
    validate_request(&req, schema).map_err(|msg| LogError::Invalid { line: line_no, msg })?;
    Ok((req, decision))
}

/// Parse a line-delimited log. Blank lines are skipped.
pub fn parse_log(text: &str, schema: &Schema) -> Result<AccessLog, LogError> {
    let mut log = AccessLog::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (req, d) = parse_line(i + 1, line, schema)?;
        let shown = req.to_string();
        log.insert(req, d).map_err(|previous| LogError::Conflict {
            line: i + 1,
            request: shown,
            previous,
        })?;
    }
    Ok(log)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub request: Request,
    pub logged: Decision,
    pub policy: Decision,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: logged {}, policy says {}", self.request, self.logged, self.policy)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub checked: usize,
    pub violations: Vec<Violation>,
}

impl ConsistencyReport {
    pub fn is_consistent(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Every entry whose policy decision differs from its label, in log order.
pub fn check_consistency(p: &Policy, log: &AccessLog, store: &EntityStore) -> ConsistencyReport {
    let entries: Vec<(&Request, Decision)> = log.iter().collect();
    let violations = entries
        .par_iter()
        .filter_map(|(req, logged)| {
            let d = policy_eval(req, p, store);
            (d != *logged).then(|| Violation {
                request: (*req).clone(),
                logged: *logged,
                policy: d,
            })
        })
        .collect();
    ConsistencyReport {
        checked: entries.len(),
        violations,
    }
}

/// Requests labeled allowed.
pub fn permitted_log(log: &AccessLog) -> BTreeSet<Request> {
    log.iter()
        .filter(|(_, d)| *d == Decision::Allowed)
        .map(|(r, _)| r.clone())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LogSlice {
    pub rule_id: String,
    pub requests: BTreeSet<Request>,
}

/// Allowed requests that `rule` permits on its own.
pub fn log_slice(rule: &Rule, log_plus: &BTreeSet<Request>, store: &EntityStore) -> LogSlice {
    LogSlice {
        rule_id: rule.id.clone(),
        requests: log_plus
            .iter()
            .filter(|r| rule_applies(rule, r, store))
            .cloned()
            .collect(),
    }
}
