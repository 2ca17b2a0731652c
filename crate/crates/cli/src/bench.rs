use std::collections::BTreeMap;
use std::fmt::Write as _;

use packorder_core::planner::{plan_exact, plan_greedy, plan_local_search, plan_random};
use packorder_core::preference::dedup_first_occurrence;
use packorder_core::scoring::{average_score, satisfaction_rate_indices, score_indices};
use packorder_core::{content_hash, load_scene_set, ClassLabel, LogScore, Method, PackingSequence, PlannerLimits, PreferenceMatrix};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::BenchArgs;
use crate::commands::{load_alias_file, load_matrix, write_text, TOOL_VERSION};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::Log;

#[derive(Debug, Clone, Serialize)]
pub struct MethodResult {
    pub score: Option<LogScore>,
    pub satisfaction_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sequence: Option<PackingSequence>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchScene {
    pub id: String,
    pub size: usize,
    pub planned_items: usize,
    pub unresolved: Vec<ClassLabel>,
    pub results: BTreeMap<Method, MethodResult>,
}

#[derive(Debug, Clone, Serialize)]
pub struct MethodSummary {
    pub ac: Option<LogScore>,
    pub scored: usize,
    pub infinite_count: usize,
    pub satisfaction_rate: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SizeRow {
    pub scene_size: usize,
    pub scenes: usize,
    pub methods: BTreeMap<Method, MethodSummary>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchProvenance {
    pub tool_version: String,
    pub matrix_hash: String,
    pub scenes_hash: String,
    pub seed: u64,
    pub random_draws: u64,
    pub limits: PlannerLimits,
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub methods: Vec<Method>,
    pub overall: BTreeMap<Method, MethodSummary>,
    pub by_scene_size: Vec<SizeRow>,
    pub scenes: Vec<BenchScene>,
    pub provenance: BenchProvenance,
}

fn evaluate(indices: &[usize], m: &PreferenceMatrix, seq: Option<PackingSequence>) -> MethodResult {
    MethodResult {
        score: Some(score_indices(indices, m).value),
        satisfaction_rate: satisfaction_rate_indices(indices, m).ok(),
        sequence: seq,
        skipped: None,
    }
}

fn run_method(
    method: Method,
    items: &[ClassLabel],
    m: &PreferenceMatrix,
    seed: u64,
    draws: u64,
    limits: &PlannerLimits,
) -> Result<MethodResult, CliError> {
    let resolve = |seq: &PackingSequence| -> Vec<usize> {
        seq.items().iter().map(|l| m.index_of(l).expect("planner output is in the catalog")).collect()
    };
    let planned = match method {
        Method::Exact if items.len() > limits.exact_max_items => {
            return Ok(MethodResult {
                score: None,
                satisfaction_rate: None,
                sequence: None,
                skipped: Some(format!("{} items exceed the exact limit of {}", items.len(), limits.exact_max_items)),
            })
        }
        Method::Exact => plan_exact(items, m, limits.exact_max_items)?,
        Method::Greedy => plan_greedy(items, m)?,
        Method::LocalSearch => plan_local_search(items, m, seed, limits.local_search_restarts)?,
        Method::Random => {
            let mut scores = Vec::with_capacity(draws as usize);
            let mut rates = Vec::new();
            for d in 0..draws {
                let indices = resolve(&plan_random(items, seed.wrapping_add(d))?);
                scores.push(score_indices(&indices, m).value);
                rates.extend(satisfaction_rate_indices(&indices, m).ok());
            }
            return Ok(MethodResult {
                score: average_score(&scores).ok().map(|a| a.value),
                satisfaction_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
                sequence: None,
                skipped: None,
            });
        }
        Method::Llm => return Err(CliError::Usage("bench compares offline planners; evaluate runs the llm pipeline".into())),
    };
    Ok(evaluate(&resolve(&planned), m, Some(planned)))
}

fn summarize(scenes: &[&BenchScene], method: Method) -> MethodSummary {
    let results: Vec<&MethodResult> = scenes.iter().filter_map(|s| s.results.get(&method)).collect();
    let scores: Vec<LogScore> = results.iter().filter_map(|r| r.score).collect();
    let avg = average_score(&scores).ok();
    let rates: Vec<f64> = results.iter().filter_map(|r| r.satisfaction_rate).collect();
    MethodSummary {
        ac: avg.map(|a| a.value),
        scored: scores.len(),
        infinite_count: avg.map_or(0, |a| a.infinite_count),
        satisfaction_rate: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
    }
}

pub fn bench(args: &BenchArgs, config: &FileConfig, log: &Log) -> Result<BenchReport, CliError> {
    if args.methods.is_empty() {
        return Err(CliError::Usage("--methods is empty".into()));
    }
    if args.methods.contains(&Method::Llm) {
        return Err(CliError::Usage("bench compares offline planners; evaluate runs the llm pipeline".into()));
    }
    let mut methods = Vec::new();
    for &m in &args.methods {
        if !methods.contains(&m) {
            methods.push(m);
        }
    }
    let scene_bytes = std::fs::read(&args.scenes).map_err(|e| CliError::io(&args.scenes, e))?;
    let set = load_scene_set(&args.scenes, false)?;
    let m = load_matrix(&args.matrix)?;
    let aliases = load_alias_file(args.aliases.as_deref().or(config.aliases.as_deref()))?;
    let seed = args.seed.or(config.seed).unwrap_or(0);
    let limits = PlannerLimits {
        exact_max_items: args.exact_max_items.unwrap_or(config.planner.exact_max_items),
        local_search_restarts: args.restarts.unwrap_or(config.planner.local_search_restarts),
    };

    let scenes = set
        .scenes
        .par_iter()
        .map(|scene| {
            let mut items = Vec::new();
            let mut unresolved = Vec::new();
            for label in dedup_first_occurrence(&scene.ground_truth) {
                match m.catalog().resolve(&label, Some(&aliases)) {
                    Some(i) => items.push(m.catalog().get(i).expect("resolved").clone()),
                    None => unresolved.push(label),
                }
            }
            let items = dedup_first_occurrence(&items);
            let mut results = BTreeMap::new();
            if !items.is_empty() {
                for &method in &methods {
                    results.insert(method, run_method(method, &items, &m, seed, args.random_draws, &limits)?);
                }
            }
            Ok(BenchScene {
                id: scene.id.clone(),
                size: scene.size,
                planned_items: items.len(),
                unresolved,
                results,
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    log.info(format_args!("benchmarked {} scenes", scenes.len()));

    let mut sizes: BTreeMap<usize, Vec<&BenchScene>> = BTreeMap::new();
    for s in &scenes {
        sizes.entry(s.size).or_default().push(s);
    }
    let by_scene_size = sizes
        .into_iter()
        .map(|(scene_size, group)| SizeRow {
            scene_size,
            scenes: group.len(),
            methods: methods.iter().map(|&mt| (mt, summarize(&group, mt))).collect(),
        })
        .collect();
    let all: Vec<&BenchScene> = scenes.iter().collect();
    let overall = methods.iter().map(|&mt| (mt, summarize(&all, mt))).collect();

    let report = BenchReport {
        methods,
        overall,
        by_scene_size,
        scenes,
        provenance: BenchProvenance {
            tool_version: TOOL_VERSION.to_string(),
            matrix_hash: m.content_hash(),
            scenes_hash: content_hash(&scene_bytes),
            seed,
            random_draws: args.random_draws,
            limits,
        },
    };
    if let Some(out) = &args.out {
        let mut json = serde_json::to_string_pretty(&report).expect("bench report serializes");
        json.push('\n');
        write_text(out, &json)?;
    }
    if let Some(csv) = &args.csv {
        write_text(csv, &report.to_csv())?;
    }
    out!("{}", report.to_text_table().trim_end());
    Ok(report)
}

fn cell(s: &MethodSummary) -> String {
    match s.ac {
        Some(v) if s.infinite_count > 0 => format!("{v:.3} ({} -inf)", s.infinite_count),
        Some(v) => format!("{v:.3}"),
        None => "skipped".to_string(),
    }
}

impl BenchReport {
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let _ = write!(out, "{:>5} {:>7}", "size", "scenes");
        for m in &self.methods {
            let _ = write!(out, " {:>18}", format!("aC {m}"));
        }
        out.push('\n');
        let rows = self.by_scene_size.iter().map(|r| (r.scene_size.to_string(), r.scenes, &r.methods));
        let total = std::iter::once(("all".to_string(), self.scenes.len(), &self.overall));
        for (size, n, methods) in rows.chain(total) {
            let _ = write!(out, "{size:>5} {n:>7}");
            for m in &self.methods {
                let _ = write!(out, " {:>18}", cell(&methods[m]));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("scene_size,method,aC,infinite_count,satisfaction_rate\n");
        for row in &self.by_scene_size {
            for (method, s) in &row.methods {
                let ac = s.ac.map_or(String::new(), |v| v.to_string());
                let sat = s.satisfaction_rate.map_or(String::new(), |v| v.to_string());
                let _ = writeln!(out, "{},{method},{ac},{},{sat}", row.scene_size, s.infinite_count);
            }
        }
        out
    }
}
