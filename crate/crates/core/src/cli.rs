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

//! The command-line interface.
//!
//! Exit codes: 0 success, 1 input or validation error, 2 the policy is
//! inconsistent with the log, 3 a resource cap was exceeded.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::access_log::{check_consistency, log_slice, parse_log, permitted_log, AccessLog, ConsistencyReport};
use crate::candidates::{enumerate_candidates, CandidateKind, EnumConfig};
use crate::model::{parse_entities, parse_policy, parse_schema, EntityStore, Policy, Rule, Schema};
use crate::space::{compute_pop, pick_targets, CapExceeded, DEFAULT_POP_CAP};
use crate::study::{
    generate_family, rule_similarity, run_study, semantic_similarity, GenError, SimilarityMetrics, StudyConfig, StudyError,
    StudySpec, CLASSROOM, CONFERENCE,
};
use crate::synth::{encode_sygus, make_mapping, SynthesisProblem};
use crate::tighten::{restrict, rule_seed, TightenConfig, TightenError};

#[derive(Debug, Parser)]
#[command(name = "cedar-tighten", version, about = "Tighten permit rules of a Cedar-subset policy against an access log")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Tighten every permit rule and write the new policy.
    Tighten(TightenArgs),
    /// Check that the policy agrees with every log entry.
    Check(CheckArgs),
    /// Similarity of a tightened policy to a reference tight policy.
    Metrics(MetricsArgs),
    /// Generate a dataset family from a study spec.
    Gen(GenArgs),
    /// Write the synthesis problem of one rule's first round as SyGuS-IF.
    ExportSygus(ExportArgs),
    /// List the potential over-privileges of each permit rule.
    EnumeratePop(RuleArgs),
    /// List the candidate conjuncts of each permit rule.
    DumpCandidates(RuleArgs),
    /// Run a study and write the result table.
    Study(StudyArgs),
}

#[derive(Debug, Clone, Args)]
pub struct Inputs {
    #[arg(long)]
    pub policy: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub entities: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SearchFlags {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 2)]
    pub max_failures: usize,
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..))]
    pub targets_per_iter: u64,
    #[arg(long, default_value_t = 2)]
    pub chain_depth: usize,
    #[arg(long, default_value_t = DEFAULT_POP_CAP)]
    pub pop_cap: usize,
    /// Comma-separated candidate kinds to enable (default: all).
    #[arg(long, value_delimiter = ',')]
    pub kinds: Option<Vec<CandidateKind>>,
    #[arg(long)]
    pub parallel: bool,
}

impl SearchFlags {
    pub fn config(&self) -> TightenConfig {
        let mut enum_cfg = EnumConfig {
            chain_depth: self.chain_depth,
            ..EnumConfig::default()
        };
        if let Some(k) = &self.kinds {
            enum_cfg.enabled_kinds = k.iter().copied().collect();
        }
        TightenConfig {
            max_failures: self.max_failures,
            targets_per_iter: self.targets_per_iter as usize,
            enum_cfg,
            seed: self.seed,
            pop_cap: self.pop_cap,
            parallel: self.parallel,
            require_consistency: true,
        }
    }
}

#[derive(Debug, Args)]
pub struct TightenArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub log: PathBuf,
    /// Tightened policy; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// JSON report.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Human-readable per-rule diff; stderr when absent.
    #[arg(long)]
    pub diff: Option<PathBuf>,
    /// Continue when the input policy disagrees with the log.
    #[arg(long)]
    pub lenient: bool,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Args)]
pub struct MetricsArgs {
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub star: PathBuf,
    #[arg(long)]
    pub tight: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
    #[arg(long)]
    pub entities: PathBuf,
    #[arg(long)]
    pub log: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct SpecChoice {
    /// Study spec file.
    #[arg(long, conflicts_with = "study")]
    pub spec: Option<PathBuf>,
    /// A shipped study: `classroom` or `conference`.
    #[arg(long)]
    pub study: Option<String>,
}

impl SpecChoice {
    fn load(&self) -> Result<StudySpec, CliError> {
        match (&self.spec, self.study.as_deref()) {
            (Some(p), _) => StudySpec::from_file(p).map_err(|e| CliError::Input(e.to_string())),
            (None, Some("classroom")) => StudySpec::from_toml_str(CLASSROOM).map_err(|e| CliError::Input(e.to_string())),
            (None, Some("conference")) => StudySpec::from_toml_str(CONFERENCE).map_err(|e| CliError::Input(e.to_string())),
            (None, Some(other)) => Err(CliError::Input(format!("unknown study `{other}` (expected classroom or conference)"))),
            (None, None) => Err(CliError::Input("one of --spec or --study is required".into())),
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[command(flatten)]
    pub spec: SpecChoice,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_delimiter = ',', required = true)]
    pub sizes: Vec<usize>,
    #[arg(long)]
    pub density: u32,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct RuleArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Only this rule.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Args)]
pub struct ExportArgs {
    #[command(flatten)]
    pub inputs: Inputs,
    #[arg(long)]
    pub log: PathBuf,
    /// The rule to export; the first permit rule when absent.
    #[arg(long)]
    pub rule: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub spec: SpecChoice,
    /// Number of seeds, starting at 0.
    #[arg(long, default_value_t = 30)]
    pub seeds: u64,
    #[arg(long, value_delimiter = ',', default_values_t = [5usize, 10, 20])]
    pub sizes: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_values_t = [30u32, 40, 50, 60, 70, 80, 90, 100])]
    pub densities: Vec<u32>,
    #[arg(long, default_value_t = 3)]
    pub repeats: usize,
    /// Result table; stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write every tightened policy here.
    #[arg(long)]
    pub policies: Option<PathBuf>,
    /// Leave the timing column out of the table.
    #[arg(long)]
    pub no_timing: bool,
    #[command(flatten)]
    pub search: SearchFlags,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Input(String),
    #[error("{0}")]
    Inconsistent(String),
    #[error("{0}")]
    Cap(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 1,
            CliError::Inconsistent(_) => 2,
            CliError::Cap(_) => 3,
        }
    }
}

impl From<CapExceeded> for CliError {
    fn from(e: CapExceeded) -> Self {
        CliError::Cap(e.to_string())
    }
}

fn inconsistency(report: &ConsistencyReport) -> CliError {
    let mut msg = format!("policy is inconsistent with the log: {} of {} entries disagree", report.violations.len(), report.checked);
    for v in &report.violations {
        msg.push_str(&format!("\n  {v}"));
    }
    CliError::Inconsistent(msg)
}

impl From<TightenError> for CliError {
    fn from(e: TightenError) -> Self {
        match e {
            TightenError::Inconsistent(r) => inconsistency(&r),
            TightenError::Cap(c) => c.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<StudyError> for CliError {
    fn from(e: StudyError) -> Self {
        match e {
            StudyError::Tighten { source: TightenError::Cap(c), .. } => c.into(),
            other => CliError::Input(other.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn write_out(path: Option<&Path>, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Input(format!("{}: {e}", p.display()))),
        None => io::stdout()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Input(format!("stdout: {e}"))),
    }
}

fn load_schema(path: &Path) -> Result<Schema, CliError> {
    parse_schema(&read(path)?).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_policy(path: &Path, schema: &Schema) -> Result<Policy, CliError> {
    parse_policy(&read(path)?, schema).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_store(path: &Path, schema: &Schema) -> Result<EntityStore, CliError> {
    parse_entities(&read(path)?, schema).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_log(path: &Path, schema: &Schema) -> Result<AccessLog, CliError> {
    parse_log(&read(path)?, schema).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_inputs(i: &Inputs) -> Result<(Schema, Policy, EntityStore), CliError> {
    let schema = load_schema(&i.schema)?;
    let policy = load_policy(&i.policy, &schema)?;
    let store = load_store(&i.entities, &schema)?;
    Ok((schema, policy, store))
}

fn selected_rules<'p>(p: &'p Policy, only: Option<&str>) -> Result<Vec<&'p Rule>, CliError> {
    match only {
        Some(id) => match p.rule(id) {
            Some(r) if r.is_permit() => Ok(vec![r]),
            Some(_) => Err(CliError::Input(format!("rule {id} is not a permit rule"))),
            None => Err(CliError::Input(format!("no rule with id {id}"))),
        },
        None => Ok(p.permits().collect()),
    }
}

fn cmd_tighten(a: &TightenArgs) -> Result<(), CliError> {
    let (schema, policy, store) = load_inputs(&a.inputs)?;
    let log = load_log(&a.log, &schema)?;
    let cfg = TightenConfig {
        require_consistency: !a.lenient,
        ..a.search.config()
    };
    let (out, report) = restrict(&policy, &log, &schema, &store, &cfg)?;
    write_out(a.out.as_deref(), &out.to_string())?;
    if let Some(p) = &a.report {
        write_out(Some(p), &report.to_json())?;
    }
    match &a.diff {
        Some(p) => write_out(Some(p), &report.to_text())?,
        None => eprint!("{}", report.to_text()),
    }
    Ok(())
}

fn cmd_check(a: &CheckArgs) -> Result<(), CliError> {
    let (schema, policy, store) = load_inputs(&a.inputs)?;
    let log = load_log(&a.log, &schema)?;
    let report = check_consistency(&policy, &log, &store);
    if !report.is_consistent() {
        return Err(inconsistency(&report));
    }
    println!("consistent: {} entries checked", report.checked);
    Ok(())
}

fn metrics_line(id: &str, m: &SimilarityMetrics) -> String {
    format!("{id}\t{:.6}\t{:.6}\n", m.over_privilege_remaining, m.intended_privilege_removed)
}

fn cmd_metrics(a: &MetricsArgs) -> Result<(), CliError> {
    let schema = load_schema(&a.schema)?;
    let init = load_policy(&a.init, &schema)?;
    let star = load_policy(&a.star, &schema)?;
    let tight = load_policy(&a.tight, &schema)?;
    let store = load_store(&a.entities, &schema)?;
    let plus = permitted_log(&load_log(&a.log, &schema)?);
    let mut out = String::from("rule\toverPrivRemaining\tintendedRemoved\n");
    for i in init.permits() {
        let (Some(s), Some(t)) = (star.rule(&i.id), tight.rule(&i.id)) else {
            return Err(CliError::Input(format!("rule {} is missing from the tightened or the tight policy", i.id)));
        };
        out.push_str(&metrics_line(&i.id, &rule_similarity(i, s, t, &schema, &store, &plus)));
    }
    out.push_str(&metrics_line("*", &semantic_similarity(&init, &star, &tight, &schema, &store, &plus)));
    write_out(None, &out)
}

fn cmd_gen(a: &GenArgs) -> Result<(), CliError> {
    let spec = a.spec.load()?;
    let fam = generate_family(&spec, a.seed, &a.sizes, a.density).map_err(|e| CliError::Input(e.to_string()))?;
    fam.write_to(&spec, &a.out).map_err(|e: GenError| CliError::Input(e.to_string()))?;
    for m in &fam.members {
        println!(
            "size {}: {} entities, {} allowed, {} denied, tight policy permits {}",
            m.size,
            m.store.len(),
            m.allowed,
            m.denied,
            m.tight_permitted
        );
    }
    Ok(())
}

fn cmd_export(a: &ExportArgs) -> Result<(), CliError> {
    let (schema, policy, store) = load_inputs(&a.inputs)?;
    let log = load_log(&a.log, &schema)?;
    let cfg = a.search.config();
    let rule = match &a.rule {
        Some(_) => selected_rules(&policy, a.rule.as_deref())?[0],
        None => policy
            .permits()
            .next()
            .ok_or_else(|| CliError::Input("the policy has no permit rule".into()))?,
    };
    let slice = log_slice(rule, &permitted_log(&log), &store);
    let pop = compute_pop(rule, &slice, &schema, &store, cfg.pop_cap)?;
    let targets = pick_targets(&pop.requests, cfg.targets_per_iter, rule_seed(cfg.seed, &rule.id), &Default::default());
    if targets.is_empty() {
        return Err(CliError::Input(format!("rule {} has no potential over-privileges", rule.id)));
    }
    let candidates = enumerate_candidates(&schema, &store, rule, &cfg.enum_cfg).map_err(|e| CliError::Input(e.to_string()))?;
    let prob = SynthesisProblem {
        rule,
        slice: &slice.requests,
        targets: &targets,
        candidates: &candidates,
        store: &store,
        schema: &schema,
    };
    let mapping = make_mapping(&store, &schema, cfg.seed);
    let text = encode_sygus(&prob, &mapping).map_err(|e| CliError::Input(e.to_string()))?;
    write_out(a.out.as_deref(), &text)
}

fn cmd_enumerate_pop(a: &RuleArgs) -> Result<(), CliError> {
    let (schema, policy, store) = load_inputs(&a.inputs)?;
    let plus = match &a.log {
        Some(p) => permitted_log(&load_log(p, &schema)?),
        None => Default::default(),
    };
    let cfg = a.search.config();
    let mut out = String::new();
    for r in selected_rules(&policy, a.rule.as_deref())? {
        let pop = compute_pop(r, &log_slice(r, &plus, &store), &schema, &store, cfg.pop_cap)?;
        out.push_str(&format!("# {}: {} requests\n", r.id, pop.len()));
        for q in &pop.requests {
            out.push_str(&format!("{q}\n"));
        }
    }
    write_out(a.out.as_deref(), &out)
}

fn cmd_dump_candidates(a: &RuleArgs) -> Result<(), CliError> {
    let (schema, policy, store) = load_inputs(&a.inputs)?;
    let cfg = a.search.config();
    let mut out = String::new();
    for r in selected_rules(&policy, a.rule.as_deref())? {
        let cands = enumerate_candidates(&schema, &store, r, &cfg.enum_cfg).map_err(|e| CliError::Input(format!("rule {}: {e}", r.id)))?;
        out.push_str(&format!("# {}: {} candidates\n", r.id, cands.len()));
        for c in &cands {
            out.push_str(&format!("{}\n", c.expr));
        }
    }
    write_out(a.out.as_deref(), &out)
}

fn cmd_study(a: &StudyArgs) -> Result<(), CliError> {
    let spec = a.spec.load()?;
    let cfg = StudyConfig {
        seeds: (0..a.seeds).collect(),
        sizes: a.sizes.clone(),
        densities: a.densities.clone(),
        tighten: a.search.config(),
        repeats: a.repeats,
    };
    let res = run_study(&spec, &cfg)?;
    write_out(a.out.as_deref(), &res.to_tsv(!a.no_timing))?;
    if let Some(p) = &a.policies {
        write_out(Some(p), &res.policies_text())?;
    }
    Ok(())
}

/// Run one parsed invocation.
pub fn run(cli: &Cli) -> Result<(), CliError> {
    match &cli.command {
        Command::Tighten(a) => cmd_tighten(a),
        Command::Check(a) => cmd_check(a),
        Command::Metrics(a) => cmd_metrics(a),
        Command::Gen(a) => cmd_gen(a),
        Command::ExportSygus(a) => cmd_export(a),
        Command::EnumeratePop(a) => cmd_enumerate_pop(a),
        Command::DumpCandidates(a) => cmd_dump_candidates(a),
        Command::Study(a) => cmd_study(a),
    }
}
