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

//! Running a study over seeds, sizes and densities.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::generate::{generate_family, FamilyMember, GenError};
use super::metrics::{decision_equivalent, rule_similarity, semantic_similarity, SimilarityMetrics};
use super::spec::StudySpec;
use crate::access_log::permitted_log;
use crate::model::Policy;
use crate::tighten::{restrict, TightenConfig, TightenError};

#[derive(Debug, Error)]
pub enum StudyError {
    #[error("seed {seed}, density {density}: {source}")]
    Gen { seed: u64, density: u32, source: GenError },
    #[error("seed {seed}, size {size}, density {density}: {source}")]
    Tighten {
        seed: u64,
        size: usize,
        density: u32,
        source: TightenError,
    },
    #[error("repeats must be at least 1")]
    Repeats,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StudyConfig {
    pub seeds: Vec<u64>,
    pub sizes: Vec<usize>,
    pub densities: Vec<u32>,
    /// Its `seed` is replaced by each family's seed.
    pub tighten: TightenConfig,
    pub repeats: usize,
}

/// Rule id used for the policy-wide row of a cell.
pub const POLICY_ROW: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct StudyRow {
    pub seed: u64,
    pub size: usize,
    pub density: u32,
    pub rule_id: String,
    pub loosened: bool,
    pub exact_recovery: bool,
    #[serde(flatten)]
    pub metrics: SimilarityMetrics,
    pub median_time_ms: f64,
}

/// One `(seed, size, density)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct CellResult {
    pub seed: u64,
    pub size: usize,
    pub density: u32,
    pub policy: Policy,
    /// One row per permit rule, then the policy-wide row.
    pub rows: Vec<StudyRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StudyResult {
    pub cells: Vec<CellResult>,
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Tighten `spec.p_init` on one family member and score the result.
pub fn run_member(
    spec: &StudySpec,
    seed: u64,
    density: u32,
    member: &FamilyMember,
    cfg: &TightenConfig,
    repeats: usize,
) -> Result<CellResult, StudyError> {
    let cfg = TightenConfig { seed, ..cfg.clone() };
    let err = |source| StudyError::Tighten {
        seed,
        size: member.size,
        density,
        source,
    };
    let (policy, first) = restrict(&spec.p_init, &member.log, &spec.schema, &member.store, &cfg).map_err(err)?;
    let mut rule_times: Vec<Vec<f64>> = first.rules.iter().map(|r| vec![r.wall_ms]).collect();
    let mut total_times = vec![first.wall_ms];
    for _ in 1..repeats {
        let (again, rep) = restrict(&spec.p_init, &member.log, &spec.schema, &member.store, &cfg).map_err(err)?;
        debug_assert_eq!(again, policy);
        for (ts, r) in rule_times.iter_mut().zip(&rep.rules) {
            ts.push(r.wall_ms);
        }
        total_times.push(rep.wall_ms);
    }
    let plus = permitted_log(&member.log);
    let loosened = spec.loosened();
    let store = &member.store;
    let schema = &spec.schema;
    let mut rows = Vec::new();
    let permits = spec
        .p_init
        .rules
        .iter()
        .zip(&spec.p_tight.rules)
        .zip(&policy.rules)
        .filter(|((i, _), _)| i.is_permit());
    for (((init, tight), star), times) in permits.zip(rule_times) {
        rows.push(StudyRow {
            seed,
            size: member.size,
            density,
            rule_id: init.id.clone(),
            loosened: loosened.contains(&init.id),
            exact_recovery: decision_equivalent(star, tight, schema, store),
            metrics: rule_similarity(init, star, tight, schema, store, &plus),
            median_time_ms: median(times),
        });
    }
    let whole = semantic_similarity(&spec.p_init, &policy, &spec.p_tight, schema, store, &plus);
    rows.push(StudyRow {
        seed,
        size: member.size,
        density,
        rule_id: POLICY_ROW.to_string(),
        loosened: !loosened.is_empty(),
        exact_recovery: rows.iter().all(|r| r.exact_recovery),
        metrics: whole,
        median_time_ms: median(total_times),
    });
    Ok(CellResult {
        seed,
        size: member.size,
        density,
        policy,
        rows,
    })
}

/// Every `(seed, size, density)` cell, ordered by seed, density, then size.
/// With `cfg.tighten.parallel`, families run in parallel; the result does
/// not depend on it.
pub fn run_study(spec: &StudySpec, cfg: &StudyConfig) -> Result<StudyResult, StudyError> {
    if cfg.repeats == 0 {
        return Err(StudyError::Repeats);
    }
    let jobs: Vec<(u64, u32)> = cfg
        .seeds
        .iter()
        .flat_map(|s| cfg.densities.iter().map(move |d| (*s, *d)))
        .collect();
    let job = |&(seed, density): &(u64, u32)| -> Result<Vec<CellResult>, StudyError> {
        let fam = generate_family(spec, seed, &cfg.sizes, density).map_err(|source| StudyError::Gen { seed, density, source })?;
        fam.members
            .iter()
            .map(|m| run_member(spec, seed, density, m, &cfg.tighten, cfg.repeats))
            .collect()
    };
    let per_job: Vec<Result<Vec<CellResult>, StudyError>> = if cfg.tighten.parallel {
        jobs.par_iter().map(job).collect()
    } else {
        jobs.iter().map(job).collect()
    };
    let mut cells = Vec::new();
    for r in per_job {
        cells.extend(r?);
    }
    Ok(StudyResult { cells })
}

impl StudyResult {
    pub fn rows(&self) -> impl Iterator<Item = &StudyRow> {
        self.cells.iter().flat_map(|c| &c.rows)
    }

    /// Tab-separated table with a header line. Timing varies between runs,
    /// so it can be left out for comparisons.
    pub fn to_tsv(&self, include_timing: bool) -> String {
        let mut out = String::from("seed\tsize\tdensity\trule\tloosened\texactRecovery\toverPrivRemaining\tintendedRemoved");
        if include_timing {
            out.push_str("\tmedianTimeMs");
        }
        out.push('\n');
        for r in self.rows() {
            let _ = write!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}",
                r.seed,
                r.size,
                r.density,
                r.rule_id,
                r.loosened,
                r.exact_recovery,
                r.metrics.over_privilege_remaining,
                r.metrics.intended_privilege_removed
            );
            if include_timing {
                let _ = write!(out, "\t{:.3}", r.median_time_ms);
            }
            out.push('\n');
        }
        out
    }

    /// The tightened policy of every cell, each under a comment header.
    pub fn policies_text(&self) -> String {
        let mut out = String::new();
        for c in &self.cells {
            let _ = writeln!(out, "// seed {} size {} density {}", c.seed, c.size, c.density);
            let _ = writeln!(out, "{}", c.policy);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SPEC: &str = r#"
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
base = 3

[[groups]]
name = "user"
type = "User"
per_size = 3
attrs = [{ name = "pcMember", gen = "cycle", group = "area" }]

[[groups]]
name = "paper"
type = "Paper"
per_size = 2
attrs = [{ name = "area", gen = "cycle", group = "area" }]
"#;

    fn cfg(parallel: bool, repeats: usize) -> StudyConfig {
        StudyConfig {
            seeds: vec![1, 2],
            sizes: vec![2, 4],
            densities: vec![50, 100],
            tighten: TightenConfig {
                parallel,
                ..TightenConfig::default()
            },
            repeats,
        }
    }

    #[test]
    fn full_density_recovers_the_dropped_conjunct() {
        let spec = StudySpec::from_toml_str(SPEC).unwrap();
        let res = run_study(&spec, &cfg(false, 1)).unwrap();
        assert_eq!(res.cells.len(), 2 * 2 * 2);
        for c in res.cells.iter().filter(|c| c.density == 100) {
            let r = &c.rows[0];
            assert!(r.exact_recovery, "{}", c.policy);
            assert_eq!(r.metrics.over_privilege_remaining, 0.0);
            assert_eq!(r.metrics.intended_privilege_removed, 0.0);
        }
        for r in res.rows() {
            assert!((0.0..=1.0).contains(&r.metrics.over_privilege_remaining));
            assert!((0.0..=1.0).contains(&r.metrics.intended_privilege_removed));
        }
    }

    #[test]
    fn repeats_and_parallelism_do_not_change_results() {
        let spec = StudySpec::from_toml_str(SPEC).unwrap();
        let a = run_study(&spec, &cfg(false, 1)).unwrap();
        let b = run_study(&spec, &cfg(true, 3)).unwrap();
        assert_eq!(a.to_tsv(false), b.to_tsv(false));
        assert_eq!(a.policies_text(), b.policies_text());
        assert!(a.to_tsv(true).lines().next().unwrap().ends_with("medianTimeMs"));
        assert!(matches!(run_study(&spec, &cfg(false, 0)), Err(StudyError::Repeats)));
    }

    #[test]
    fn medians() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0]), 2.5);
    }
}
