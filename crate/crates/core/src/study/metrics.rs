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

//! How close a tightened policy is to the reference tight policy.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::model::{EntityStore, Policy, Request, Rule, Schema};
use crate::space::{denotation, policy_denotation};

/// Both fractions lie in `[0, 1]`; lower is better.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimilarityMetrics {
    /// Share of the over-privileges `[[init]] \ [[tight]]` still permitted.
    pub over_privilege_remaining: f64,
    /// Share of the unexercised intended privileges `[[tight]] \ L+` no
    /// longer permitted.
    pub intended_privilege_removed: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// The metrics from the three denotations and the allowed log requests.
pub fn metrics_from_sets(
    init: &BTreeSet<Request>,
    star: &BTreeSet<Request>,
    tight: &BTreeSet<Request>,
    log_plus: &BTreeSet<Request>,
) -> SimilarityMetrics {
    let op: Vec<&Request> = init.difference(tight).collect();
    let iu: Vec<&Request> = tight.difference(log_plus).collect();
    SimilarityMetrics {
        over_privilege_remaining: ratio(op.iter().filter(|r| star.contains(**r)).count(), op.len()),
        intended_privilege_removed: ratio(iu.iter().filter(|r| !star.contains(**r)).count(), iu.len()),
    }
}

/// Policy-wide metrics by enumeration of the request universe.
pub fn semantic_similarity(
    p_init: &Policy,
    p_star: &Policy,
    p_tight: &Policy,
    schema: &Schema,
    store: &EntityStore,
    log_plus: &BTreeSet<Request>,
) -> SimilarityMetrics {
    let den = |p: &Policy| -> BTreeSet<Request> { policy_denotation(p, schema, store).into_iter().collect() };
    metrics_from_sets(&den(p_init), &den(p_star), &den(p_tight), log_plus)
}

/// Metrics of one rule against its counterparts, each rule on its own.
pub fn rule_similarity(
    init: &Rule,
    star: &Rule,
    tight: &Rule,
    schema: &Schema,
    store: &EntityStore,
    log_plus: &BTreeSet<Request>,
) -> SimilarityMetrics {
    let den = |r: &Rule| -> BTreeSet<Request> { denotation(r, schema, store).into_iter().collect() };
    metrics_from_sets(&den(init), &den(star), &den(tight), log_plus)
}

/// Whether two rules permit the same requests of the universe.
pub fn decision_equivalent(a: &Rule, b: &Rule, schema: &Schema, store: &EntityStore) -> bool {
    denotation(a, schema, store) == denotation(b, schema, store)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{parse_policy, parse_schema, EntityUid, EntityTypeName, ActionName};

    fn req(i: usize) -> Request {
        Request::new(
            EntityUid::new(EntityTypeName::new("U"), format!("u{i}")),
            ActionName::new("A"),
            EntityUid::new(EntityTypeName::new("R"), "r"),
        )
    }

    fn set(ids: &[usize]) -> BTreeSet<Request> {
        ids.iter().map(|i| req(*i)).collect()
    }

    #[test]
    fn hand_computed_values() {
        // init 0..10, tight 0..4, log+ {0, 1}, star {0, 1, 2, 4, 5}
        let init = set(&(0..10).collect::<Vec<_>>());
        let tight = set(&[0, 1, 2, 3]);
        let plus = set(&[0, 1]);
        let star = set(&[0, 1, 2, 4, 5]);
        let m = metrics_from_sets(&init, &star, &tight, &plus);
        // OP = 4..10 (6), remaining {4,5}; IU = {2,3}, removed {3}
        assert_eq!(m.over_privilege_remaining, 2.0 / 6.0);
        assert_eq!(m.intended_privilege_removed, 0.5);
        let id = metrics_from_sets(&init, &init, &tight, &plus);
        assert_eq!((id.over_privilege_remaining, id.intended_privilege_removed), (1.0, 0.0));
        let ideal = metrics_from_sets(&init, &tight, &tight, &plus);
        assert_eq!((ideal.over_privilege_remaining, ideal.intended_privilege_removed), (0.0, 0.0));
        let empty = metrics_from_sets(&tight, &BTreeSet::new(), &tight, &tight);
        assert_eq!((empty.over_privilege_remaining, empty.intended_privilege_removed), (0.0, 0.0));
    }

    #[test]
    fn policy_and_rule_level() {
        let s = parse_schema(
            "entity Area; entity User { pcMember?: Area }; entity Paper { area: Area };
             action Read appliesTo { principal: User, resource: Paper };",
        )
        .unwrap();
        let st = EntityStore::from_json_str(
            r#"[
              {"uid": {"type": "Area", "id": "a"}, "attrs": {}, "parents": []},
              {"uid": {"type": "Area", "id": "b"}, "attrs": {}, "parents": []},
              {"uid": {"type": "User", "id": "u"}, "attrs": {"pcMember": {"type": "Area", "id": "a"}}, "parents": []},
              {"uid": {"type": "User", "id": "v"}, "attrs": {}, "parents": []},
              {"uid": {"type": "Paper", "id": "p"}, "attrs": {"area": {"type": "Area", "id": "a"}}, "parents": []},
              {"uid": {"type": "Paper", "id": "q"}, "attrs": {"area": {"type": "Area", "id": "b"}}, "parents": []}
            ]"#,
            &s,
        )
        .unwrap();
        let init = parse_policy(r#"permit (principal, action, resource) when { principal has pcMember };"#, &s).unwrap();
        let tight = parse_policy(
            r#"permit (principal, action, resource) when { principal has pcMember && principal.pcMember == resource.area };"#,
            &s,
        )
        .unwrap();
        let none = BTreeSet::new();
        let m = semantic_similarity(&init, &init, &tight, &s, &st, &none);
        assert_eq!((m.over_privilege_remaining, m.intended_privilege_removed), (1.0, 0.0));
        let m = semantic_similarity(&init, &tight, &tight, &s, &st, &none);
        assert_eq!((m.over_privilege_remaining, m.intended_privilege_removed), (0.0, 0.0));
        let r = rule_similarity(&init.rules[0], &init.rules[0], &tight.rules[0], &s, &st, &none);
        assert_eq!(r, SimilarityMetrics { over_privilege_remaining: 1.0, intended_privilege_removed: 0.0 });
        assert!(decision_equivalent(&tight.rules[0], &tight.rules[0], &s, &st));
        assert!(!decision_equivalent(&init.rules[0], &tight.rules[0], &s, &st));
    }
}
