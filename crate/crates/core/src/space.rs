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

//! The request universe, rule denotations and over-privilege sets.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::model::{rule_applies, EntityConstraint, EntityStore, EntityUid, Policy, Request, Rule, Schema, Scope, Decision, policy_eval};
use crate::access_log::LogSlice;

pub const DEFAULT_POP_CAP: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("rule {rule}: {size} potential over-privileges exceed the cap of {cap}")]
pub struct CapExceeded {
    pub rule: String,
    pub size: usize,
    pub cap: usize,
}

fn candidates_for<'s>(c: Option<&EntityConstraint>, ty_entities: impl Iterator<Item = &'s EntityUid>) -> Vec<&'s EntityUid> {
    match c {
        Some(EntityConstraint::Eq(uid)) => ty_entities.filter(|u| *u == uid).collect(),
        Some(EntityConstraint::Is(t)) => ty_entities.filter(|u| u.entity_type() == t).collect(),
        _ => ty_entities.collect(),
    }
}

/// All schema-valid requests over store entities, with empty context, in
/// `(action, principal, resource)` order. With a scope, requests the scope
/// rules out by action or by `is`/`==` are skipped.
pub fn enumerate_requests(schema: &Schema, store: &EntityStore, scope: Option<&Scope>) -> Vec<Request> {
    let mut out = Vec::new();
    for (action, decl) in schema.actions() {
        if scope.is_some_and(|s| !s.action.matches(action)) {
            continue;
        }
        let principals = candidates_for(
            scope.map(|s| &s.principal),
            decl.principal_types.iter().flat_map(|t| store.of_type(t)),
        );
        let resources = candidates_for(
            scope.map(|s| &s.resource),
            decl.resource_types.iter().flat_map(|t| store.of_type(t)),
        );
        for p in &principals {
            for r in &resources {
                out.push(Request::new((*p).clone(), action.clone(), (*r).clone()));
            }
        }
    }
    out
}

/// `[[rule]]`: universe requests the rule permits on its own, sorted.
pub fn denotation(rule: &Rule, schema: &Schema, store: &EntityStore) -> Vec<Request> {
    enumerate_requests(schema, store, Some(&rule.scope))
        .into_par_iter()
        .filter(|r| rule_applies(rule, r, store))
        .collect()
}

/// Universe requests the whole policy allows, sorted.
pub fn policy_denotation(p: &Policy, schema: &Schema, store: &EntityStore) -> Vec<Request> {
    enumerate_requests(schema, store, None)
        .into_par_iter()
        .filter(|r| policy_eval(r, p, store) == Decision::Allowed)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PopSet {
    pub rule_id: String,
    /// Sorted.
    pub requests: Vec<Request>,
}

impl PopSet {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }
}

/// `[[rule]] \ slice`, given the rule's denotation.
pub fn pop_from_denotation(rule_id: &str, den: &[Request], slice: &LogSlice, cap: usize) -> Result<PopSet, CapExceeded> {
    let requests: Vec<Request> = den
        .iter()
        .filter(|r| !slice.requests.contains(*r))
        .cloned()
        .collect();
    if requests.len() > cap {
        return Err(CapExceeded {
            rule: rule_id.to_string(),
            size: requests.len(),
            cap,
        });
    }
    Ok(PopSet {
        rule_id: rule_id.to_string(),
        requests,
    })
}

/// `[[rule]] \ slice`.
pub fn compute_pop(rule: &Rule, slice: &LogSlice, schema: &Schema, store: &EntityStore, cap: usize) -> Result<PopSet, CapExceeded> {
    pop_from_denotation(&rule.id, &denotation(rule, schema, store), slice, cap)
}

/// Up to `k` distinct requests from `pop`, drawn by a seeded shuffle of the
/// sorted set. Members of `exclude` are used only when nothing else is left.
pub fn pick_targets(pop: &[Request], k: usize, seed: u64, exclude: &BTreeSet<Request>) -> Vec<Request> {
    let mut order: Vec<usize> = (0..pop.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (fresh, stale): (Vec<usize>, Vec<usize>) = order.into_iter().partition(|i| !exclude.contains(&pop[*i]));
    fresh
        .into_iter()
        .chain(stale)
        .take(k)
        .map(|i| pop[i].clone())
        .collect()
}
