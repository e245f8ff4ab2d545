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

//! Finding one separating conjunct, and exporting the same problem as a
//! SyGuS-IF document.

pub mod sexpr;
pub mod sygus;

use std::collections::BTreeSet;

use rayon::prelude::*;

use crate::candidates::CandidatePredicate;
use crate::model::eval::body_holds;
use crate::model::{EntityStore, Request, Rule, Schema};

pub use sygus::{encode_sygus, make_mapping, EntityIntMapping, SygusError};

/// One call's worth of input. `slice` must be permitted by `rule` and every
/// target must be in `[[rule]]` but not in the slice.
#[derive(Debug, Clone, Copy)]
pub struct SynthesisProblem<'a> {
    pub rule: &'a Rule,
    pub slice: &'a BTreeSet<Request>,
    pub targets: &'a [Request],
    pub candidates: &'a [CandidatePredicate],
    pub store: &'a EntityStore,
    pub schema: &'a Schema,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SynthesisResult {
    Found {
        /// Position of the conjunct in the candidate list.
        index: usize,
        conjunct: CandidatePredicate,
        new_rule: Rule,
        denied_targets: Vec<Request>,
    },
    Failure,
}

impl SynthesisResult {
    pub fn is_found(&self) -> bool {
        matches!(self, SynthesisResult::Found { .. })
    }
}

/// Whether `cand` denies some target and keeps every slice request.
///
/// Since the slice and the targets are already permitted by the rule, adding
/// `cand` as a conjunct denies a request exactly when `cand` does not hold on
/// it. Targets are checked first because they are few.
pub fn separates(cand: &CandidatePredicate, prob: &SynthesisProblem<'_>) -> bool {
    prob.targets.iter().any(|t| !body_holds(&cand.expr, t, prob.store))
        && prob.slice.iter().all(|r| body_holds(&cand.expr, r, prob.store))
}

fn found(index: usize, prob: &SynthesisProblem<'_>) -> SynthesisResult {
    let cand = &prob.candidates[index];
    SynthesisResult::Found {
        index,
        conjunct: cand.clone(),
        new_rule: prob.rule.with_conjunct(cand.expr.clone()),
        denied_targets: prob
            .targets
            .iter()
            .filter(|t| !body_holds(&cand.expr, t, prob.store))
            .cloned()
            .collect(),
    }
}

/// The first candidate, in list order, that separates.
pub fn restrict_one(prob: &SynthesisProblem<'_>) -> SynthesisResult {
    match prob.candidates.iter().position(|c| separates(c, prob)) {
        Some(i) => found(i, prob),
        None => SynthesisResult::Failure,
    }
}

/// Same result as [`restrict_one`], with candidates checked in parallel.
pub fn restrict_one_parallel(prob: &SynthesisProblem<'_>) -> SynthesisResult {
    match prob.candidates.par_iter().position_first(|c| separates(c, prob)) {
        Some(i) => found(i, prob),
        None => SynthesisResult::Failure,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::access_log::{log_slice, permitted_log, AccessLog};
    use crate::candidates::{enumerate_candidates, EnumConfig};
    use crate::model::{parse_expr, parse_policy, parse_schema, rule_applies, Decision};
    use crate::space::{compute_pop, denotation};

    const CONFERENCE: &str = r#"
        entity User { isPCChair: Bool, isAreaChair: Bool, pcMember?: Area};
        entity Area;
        entity Paper { authors: Set<User>, reviewers: Set<User>, area: Area};
        action Read appliesTo { principal: User, resource: Paper };
    "#;

    fn store(s: &Schema) -> EntityStore {
        let mut items = Vec::new();
        for a in 0..3 {
            items.push(format!(r#"{{"uid": {{"type": "Area", "id": "a{a}"}}, "attrs": {{}}, "parents": []}}"#));
        }
        for u in 0..6 {
            items.push(format!(
                r#"{{"uid": {{"type": "User", "id": "u{u}"}}, "attrs": {{"isPCChair": false, "isAreaChair": false, "pcMember": {{"type": "Area", "id": "a{}"}}}}, "parents": []}}"#,
                u % 3
            ));
        }
        items.push(r#"{"uid": {"type": "User", "id": "x"}, "attrs": {"isPCChair": false, "isAreaChair": false}, "parents": []}"#.to_string());
        for p in 0..6 {
            items.push(format!(
                r#"{{"uid": {{"type": "Paper", "id": "p{p}"}}, "attrs": {{"authors": [{{"type": "User", "id": "x"}}], "reviewers": [], "area": {{"type": "Area", "id": "a{}"}}}}, "parents": []}}"#,
                p % 3
            ));
        }
        EntityStore::from_json_str(&format!("[{}]", items.join(",")), s).unwrap()
    }

    #[test]
    fn motivating_example_finds_area_equality() {
        let s = parse_schema(CONFERENCE).unwrap();
        let st = store(&s);
        let p = parse_policy(
            r#"permit (principal, action == Action::"Read", resource is Paper) when { principal has pcMember };"#,
            &s,
        )
        .unwrap();
        let tight = parse_policy(
            r#"permit (principal, action == Action::"Read", resource is Paper) when { principal has pcMember && principal.pcMember == resource.area };"#,
            &s,
        )
        .unwrap();
        let rule = &p.rules[0];
        let log: AccessLog = denotation(&tight.rules[0], &s, &st)
            .into_iter()
            .map(|r| (r, Decision::Allowed))
            .collect();
        let slice = log_slice(rule, &permitted_log(&log), &st);
        let pop = compute_pop(rule, &slice, &s, &st, usize::MAX).unwrap();
        assert!(!pop.is_empty());
        let cands = enumerate_candidates(&s, &st, rule, &EnumConfig::default()).unwrap();
        let prob = SynthesisProblem {
            rule,
            slice: &slice.requests,
            targets: &pop.requests[..1],
            candidates: &cands,
            store: &st,
            schema: &s,
        };
        let res = restrict_one(&prob);
        assert_eq!(res, restrict_one_parallel(&prob));
        let SynthesisResult::Found { conjunct, new_rule, denied_targets, .. } = res else {
            panic!("expected a conjunct");
        };
        // Any qualifying conjunct must keep the slice and deny the target.
        assert!(slice.requests.iter().all(|r| rule_applies(&new_rule, r, &st)));
        assert_eq!(denied_targets, pop.requests[..1].to_vec());
        // With every cross-area request as a target, the smallest conjunct
        // that keeps the slice is the area equality.
        let all_targets = pop.requests.clone();
        let prob = SynthesisProblem { targets: &all_targets, ..prob };
        let SynthesisResult::Found { conjunct: c2, .. } = restrict_one(&prob) else { panic!() };
        let _ = conjunct;
        let want = parse_expr("principal has pcMember && principal.pcMember == resource.area").unwrap();
        let qualifying: Vec<_> = cands.iter().filter(|c| separates(c, &prob)).collect();
        assert!(qualifying.iter().any(|c| c.expr == want));
        assert_eq!(&c2, qualifying[0]);
    }

    #[test]
    fn empty_candidates_fail() {
        let s = parse_schema(CONFERENCE).unwrap();
        let st = store(&s);
        let p = parse_policy("permit(principal, action, resource);", &s).unwrap();
        let slice = BTreeSet::new();
        let den = denotation(&p.rules[0], &s, &st);
        let prob = SynthesisProblem {
            rule: &p.rules[0],
            slice: &slice,
            targets: &den[..1],
            candidates: &[],
            store: &st,
            schema: &s,
        };
        assert_eq!(restrict_one(&prob), SynthesisResult::Failure);
    }
}
