//! Grocery packing order: a pairwise human-preference model, the Packing
//! Consistency Score, exact and heuristic sequence planners, an LLM-backed
//! perception/planning text pipeline and the evaluation metric suite.
//!
//! Sequences are bottom-first throughout: index 0 is the lowest item in the
//! container.

pub mod dataset;
pub mod label;
pub mod metrics;
pub mod pipeline;
pub mod planner;
pub mod preference;
pub mod provider;
pub mod scoring;

pub use dataset::{content_hash, load_aliases, load_scene_set, load_survey, synth_corpus, SceneRecord, SceneSet, SynthSpec};
pub use label::{AliasTable, ClassCatalog, ClassLabel};
pub use metrics::{assemble_report, EvalReport, SceneRun, SceneStatus};
pub use pipeline::{
    parse_detection, render_planning_prompt, run_pipeline, validate_plan, PipelineResult, PlanCheck, ReferenceLexicon,
    TemplateSet, ValidationPolicy,
};
pub use planner::{plan, plan_exact, plan_greedy, plan_local_search, plan_random, Method, PlanRequest, PlannerLimits};
pub use preference::{build_matrix, normalize_corpus, Direction, PreferenceMatrix, SurveyCorpus};
pub use provider::{ChatProvider, MockProvider, ProviderConfig, ProviderKind};
pub use scoring::{average_score, constraint_satisfaction_rate, score, ConsistencyScore, LogScore, PackingSequence};
