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

//! The tightening driver.
//!
//! Each permit rule is strengthened independently. The rule's log slice is
//! computed once from the input rule; each round picks targets among the
//! permitted requests outside the slice and adds the first candidate that
//! denies one of them while keeping the slice. A round with no such
//! candidate is a failure; the rule is done when nothing outside the slice
//! remains or after `max_failures` failures in total.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::time::Instant;

use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::access_log::{check_consistency, log_slice, permitted_log, AccessLog, ConsistencyReport};
use crate::candidates::{enumerate_candidates, CandidateKind, EnumConfig};
use crate::model::eval::body_holds;
use crate::model::{EntityStore, Expr, Policy, Request, Rule, Schema, TypeError, Value};
use crate::space::{denotation, pick_targets, pop_from_denotation, CapExceeded, DEFAULT_POP_CAP};
use crate::synth::{restrict_one, restrict_one_parallel, SynthesisProblem, SynthesisResult};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TightenConfig {
    pub max_failures: usize,
    pub targets_per_iter: usize,
    pub enum_cfg: EnumConfig,
    pub seed: u64,
    pub pop_cap: usize,
    pub parallel: bool,
    /// Treat an inconsistent input policy as an error rather than a warning.
    pub require_consistency: bool,
}

impl Default for TightenConfig {
    fn default() -> Self {
        Self {
            max_failures: 2,
            targets_per_iter: 3,
            enum_cfg: EnumConfig::default(),
            seed: 0,
            pop_cap: DEFAULT_POP_CAP,
            parallel: false,
            require_consistency: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TightenError {
    #[error("policy is inconsistent with the log ({} violations)", .0.violations.len())]
    Inconsistent(ConsistencyReport),
    #[error(transparent)]
    Cap(#[from] CapExceeded),
    #[error("rule {rule}: {source}")]
    Type { rule: String, source: TypeError },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum TerminationReason {
    PopEmpty,
    FailureBudget,
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TerminationReason::PopEmpty => "popEmpty",
            TerminationReason::FailureBudget => "failureBudget",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Iteration {
    pub targets: Vec<String>,
    /// The added conjunct, `None` for a failed round.
    pub conjunct: Option<String>,
    pub kind: Option<CandidateKind>,
    pub pop_before: usize,
    pub pop_after: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct RuleReport {
    pub rule_id: String,
    pub original: String,
    pub tightened: String,
    pub slice_size: usize,
    pub candidates: usize,
    pub iterations: Vec<Iteration>,
    pub failures: usize,
    pub termination: TerminationReason,
    #[serde(skip)]
    pub wall_ms: f64,
}

impl RuleReport {
    pub fn added(&self) -> impl Iterator<Item = &str> {
        self.iterations.iter().filter_map(|i| i.conjunct.as_deref())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TighteningReport {
    pub max_failures: usize,
    pub targets_per_iter: usize,
    pub chain_depth: usize,
    pub seed: u64,
    pub rules: Vec<RuleReport>,
    pub consistency_violations: usize,
    #[serde(skip)]
    pub wall_ms: f64,
}

impl TighteningReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// Human-readable summary with a per-rule diff.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "max-failures {} targets-per-iter {} chain-depth {} seed {}",
            self.max_failures, self.targets_per_iter, self.chain_depth, self.seed
        );
        for r in &self.rules {
            let accepted = r.iterations.iter().filter(|i| i.conjunct.is_some()).count();
            let _ = writeln!(
                s,
                "\nrule {}: {} rounds, {} accepted, {} failed, terminated by {}; slice {}, candidates {}",
                r.rule_id,
                r.iterations.len(),
                accepted,
                r.failures,
                r.termination,
                r.slice_size,
                r.candidates
            );
            for (n, it) in r.iterations.iter().enumerate() {
                match &it.conjunct {
                    Some(c) => {
                        let _ = writeln!(s, "  round {}: added `{c}` (pop {} -> {})", n + 1, it.pop_before, it.pop_after);
                    }
                    None => {
                        let _ = writeln!(
                            s,
                            "  round {}: no separating conjunct for targets {}",
                            n + 1,
                            it.targets.join(", ")
                        );
                    }
                }
            }
            if r.original != r.tightened {
                for line in r.original.lines() {
                    let _ = writeln!(s, "- {line}");
                }
                for line in r.tightened.lines() {
                    let _ = writeln!(s, "+ {line}");
                }
            } else {
                let _ = writeln!(s, "  (unchanged)");
            }
        }
        s
    }
}

/// Per-rule seed from the global seed and the rule id (FNV-1a).
pub fn rule_seed(seed: u64, rule_id: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ seed;
    for b in rule_id.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn round_seed(rule_seed: u64, round: usize) -> u64 {
    rule_seed.wrapping_add((round as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15))
}

/// Drop `true` and duplicate conjuncts and flatten nested `&&`.
pub fn simplify_body(e: &Expr) -> Expr {
    let mut kept: Vec<Expr> = Vec::new();
    for c in e.conjuncts() {
        if matches!(c, Expr::Lit(Value::Bool(true))) || kept.contains(c) {
            continue;
        }
        kept.push(c.clone());
    }
    Expr::conjunction(kept).unwrap_or(Expr::Lit(Value::Bool(true)))
}

fn simplify_rule(r: &Rule) -> Rule {
    let body = r.body.as_ref().map(simplify_body).filter(|b| *b != Expr::Lit(Value::Bool(true)));
    Rule { body, ..r.clone() }
}

/// Tighten one permit rule against the allowed log requests.
pub fn tighten_rule(
    rule: &Rule,
    log_plus: &BTreeSet<Request>,
    schema: &Schema,
    store: &EntityStore,
    cfg: &TightenConfig,
) -> Result<(Rule, RuleReport), TightenError> {
    let start = Instant::now();
    let slice = log_slice(rule, log_plus, store);
    let candidates = enumerate_candidates(schema, store, rule, &cfg.enum_cfg).map_err(|source| TightenError::Type {
        rule: rule.id.clone(),
        source,
    })?;
    let mut den = denotation(rule, schema, store);
    let seed = rule_seed(cfg.seed, &rule.id);
    let mut current = rule.clone();
    let mut failures = 0;
    let mut excluded: BTreeSet<Request> = BTreeSet::new();
    let mut iterations = Vec::new();
    let termination = loop {
        let pop = pop_from_denotation(&rule.id, &den, &slice, cfg.pop_cap)?;
        if pop.is_empty() {
            break TerminationReason::PopEmpty;
        }
        if failures >= cfg.max_failures {
            break TerminationReason::FailureBudget;
        }
        let targets = pick_targets(&pop.requests, cfg.targets_per_iter.max(1), round_seed(seed, iterations.len()), &excluded);
        let prob = SynthesisProblem {
            rule: &current,
            slice: &slice.requests,
            targets: &targets,
            candidates: &candidates,
            store,
            schema,
        };
        let res = if cfg.parallel {
            restrict_one_parallel(&prob)
        } else {
            restrict_one(&prob)
        };
        let shown: Vec<String> = targets.iter().map(Request::to_string).collect();
        match res {
            SynthesisResult::Found { conjunct, new_rule, .. } => {
                den.retain(|r| body_holds(&conjunct.expr, r, store));
                let pop_after = den.iter().filter(|r| !slice.requests.contains(*r)).count();
                iterations.push(Iteration {
                    targets: shown,
                    conjunct: Some(conjunct.expr.to_string()),
                    kind: Some(conjunct.kind),
                    pop_before: pop.len(),
                    pop_after,
                });
                current = new_rule;
            }
            SynthesisResult::Failure => {
                failures += 1;
                info!(
                    "rule {} round {}: no candidate separates targets {}",
                    rule.id,
                    iterations.len() + 1,
                    shown.join(", ")
                );
                excluded.extend(targets);
                iterations.push(Iteration {
                    targets: shown,
                    conjunct: None,
                    kind: None,
                    pop_before: pop.len(),
                    pop_after: pop.len(),
                });
            }
        }
    };
    let tightened = if current == *rule { current } else { simplify_rule(&current) };
    let report = RuleReport {
        rule_id: rule.id.clone(),
        original: rule.to_string(),
        tightened: tightened.to_string(),
        slice_size: slice.requests.len(),
        candidates: candidates.len(),
        iterations,
        failures,
        termination,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((tightened, report))
}

/// Tighten every permit rule of `p`; forbid rules are kept unchanged and the
/// rule order is preserved.
pub fn restrict(
    p: &Policy,
    log: &AccessLog,
    schema: &Schema,
    store: &EntityStore,
    cfg: &TightenConfig,
) -> Result<(Policy, TighteningReport), TightenError> {
    let start = Instant::now();
    let consistency = check_consistency(p, log, store);
    if !consistency.is_consistent() {
        if cfg.require_consistency {
            return Err(TightenError::Inconsistent(consistency));
        }
        warn!(
            "policy is inconsistent with the log ({} violations); continuing",
            consistency.violations.len()
        );
    }
    let plus = permitted_log(log);
    let run = |r: &Rule| -> Result<Option<(Rule, RuleReport)>, TightenError> {
        if r.is_permit() {
            tighten_rule(r, &plus, schema, store, cfg).map(Some)
        } else {
            Ok(None)
        }
    };
    let results: Vec<Result<Option<(Rule, RuleReport)>, TightenError>> = if cfg.parallel {
        p.rules.par_iter().map(run).collect()
    } else {
        p.rules.iter().map(run).collect()
    };
    let mut rules = Vec::with_capacity(p.rules.len());
    let mut reports = Vec::new();
    for (orig, res) in p.rules.iter().zip(results) {
        match res? {
            Some((r, rep)) => {
                rules.push(r);
                reports.push(rep);
            }
            None => rules.push(orig.clone()),
        }
    }
    let report = TighteningReport {
        max_failures: cfg.max_failures,
        targets_per_iter: cfg.targets_per_iter,
        chain_depth: cfg.enum_cfg.chain_depth,
        seed: cfg.seed,
        rules: reports,
        consistency_violations: consistency.violations.len(),
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
    };
    Ok((Policy::new(rules), report))
}
