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

//! Case studies: seeded dataset generation, similarity metrics and study
//! runs.

pub mod generate;
pub mod metrics;
pub mod runner;
pub mod spec;

pub use generate::{generate_family, generate_store, DatasetFamily, FamilyMember, GenError};
pub use metrics::{decision_equivalent, metrics_from_sets, rule_similarity, semantic_similarity, SimilarityMetrics};
pub use runner::{run_member, run_study, CellResult, StudyConfig, StudyError, StudyResult, StudyRow, POLICY_ROW};
pub use spec::{SpecError, StudySpec};

/// The classroom case study shipped with the crate.
pub const CLASSROOM: &str = include_str!("../../studies/classroom.toml");
/// The conference case study shipped with the crate.
pub const CONFERENCE: &str = include_str!("../../studies/conference.toml");
