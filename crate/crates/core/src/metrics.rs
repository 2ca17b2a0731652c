//! Detection and planning evaluation: per-class F1 with macro averages,
//! success rate, consistency aggregates and report assembly.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{SceneRecord, SceneSet};
use crate::label::{plural_equivalent, AliasTable, ClassCatalog, ClassLabel};
use crate::pipeline::{
    matched_count, replay_transcripts, PipelineError, PipelineResult, ReferenceLexicon, Stage, Transcript, ValidationPolicy,
};
use crate::preference::PreferenceMatrix;
use crate::provider::ProviderKind;
use crate::scoring::{average_score, satisfaction_rate_indices, score_indices, AverageScore, LogScore, PackingSequence};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no ground-truth classes to evaluate")]
    NoGroundTruth,
    #[error("no scenes to evaluate")]
    NoScenes,
    #[error("runs do not cover the scene set: {0}")]
    MismatchedScenes(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ClassTally {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

/// Per-class detection tallies, plus the classes seen in ground truth.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Tallies {
    pub classes: BTreeMap<String, ClassTally>,
    pub truth_classes: BTreeSet<String>,
}

impl Tallies {
    pub fn merge(&mut self, other: &Tallies) {
        for (class, t) in &other.classes {
            let entry = self.classes.entry(class.clone()).or_default();
            entry.tp += t.tp;
            entry.fp += t.fp;
            entry.fn_ += t.fn_;
        }
        self.truth_classes.extend(other.truth_classes.iter().cloned());
    }
}

/// Resolves a predicted label: alias, then exact or plural match against the
/// ground truth, then against the catalog, else the label itself.
fn resolve_prediction(
    label: &ClassLabel,
    truth: &BTreeSet<ClassLabel>,
    aliases: &AliasTable,
    catalog: Option<&ClassCatalog>,
) -> ClassLabel {
    let label = aliases.canonical(label);
    if truth.contains(label) {
        return label.clone();
    }
    if let Some(t) = truth.iter().find(|t| plural_equivalent(t.as_str(), label.as_str())) {
        return t.clone();
    }
    if let Some(i) = catalog.and_then(|c| c.resolve(label, Some(aliases))) {
        return catalog.and_then(|c| c.get(i)).expect("resolved index").clone();
    }
    label.clone()
}

/// Set-based tp/fp/fn for one scene.
pub fn match_labels(
    predicted: &[ClassLabel],
    truth: &[ClassLabel],
    aliases: &AliasTable,
    catalog: Option<&ClassCatalog>,
) -> Tallies {
    let truth: BTreeSet<ClassLabel> = truth.iter().map(|t| aliases.canonical(t).clone()).collect();
    let resolved: BTreeSet<ClassLabel> = predicted
        .iter()
        .map(|p| resolve_prediction(p, &truth, aliases, catalog))
        .collect();

    let mut tallies = Tallies::default();
    for class in &truth {
        let entry = tallies.classes.entry(class.to_string()).or_default();
        if resolved.contains(class) {
            entry.tp += 1;
        } else {
            entry.fn_ += 1;
        }
        tallies.truth_classes.insert(class.to_string());
    }
    for class in resolved.difference(&truth) {
        tallies.classes.entry(class.to_string()).or_default().fp += 1;
    }
    tallies
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionMetrics {
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub ap: f64,
    pub ar: f64,
    pub af1: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Per-class precision, recall and F1 over accumulated tallies; AP, AR and
/// AF1 are unweighted means over classes present in ground truth.
pub fn f1_scores(tallies: &Tallies) -> Result<DetectionMetrics, MetricsError> {
    if tallies.truth_classes.is_empty() {
        return Err(MetricsError::NoGroundTruth);
    }
    let per_class: BTreeMap<String, ClassMetrics> = tallies
        .classes
        .iter()
        .map(|(class, t)| {
            let precision = ratio(t.tp, t.tp + t.fp);
            let recall = ratio(t.tp, t.tp + t.fn_);
            let metrics = ClassMetrics {
                tp: t.tp,
                fp: t.fp,
                fn_: t.fn_,
                precision,
                recall,
                f1: f1(precision, recall),
            };
            (class.clone(), metrics)
        })
        .collect();
    let n = tallies.truth_classes.len() as f64;
    let mean = |get: fn(&ClassMetrics) -> f64| tallies.truth_classes.iter().map(|c| get(&per_class[c])).sum::<f64>() / n;
    Ok(DetectionMetrics {
        ap: mean(|m| m.precision),
        ar: mean(|m| m.recall),
        af1: mean(|m| m.f1),
        per_class,
    })
}

/// Fraction of detected items that appear in the accepted plan; 0 without one.
pub fn scene_success(detected: &[ClassLabel], planned: Option<&PackingSequence>) -> f64 {
    match planned {
        Some(plan) if !detected.is_empty() => matched_count(detected, plan.items()) as f64 / detected.len() as f64,
        _ => 0.0,
    }
}

/// Mean of [`scene_success`] over scenes.
pub fn success_rate(scenes: &[(&[ClassLabel], Option<&PackingSequence>)]) -> Result<f64, MetricsError> {
    if scenes.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    Ok(scenes.iter().map(|(d, p)| scene_success(d, *p)).sum::<f64>() / scenes.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneStatus {
    Planned,
    ValidationExhausted,
    EmptyDetection,
    ProviderError,
}

/// Outcome of the pipeline on one scene, with everything the report needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneRun {
    pub scene_id: String,
    pub status: SceneStatus,
    pub detected: Vec<ClassLabel>,
    pub planned: Option<PackingSequence>,
    pub attempts: u32,
    pub transcripts: Vec<Transcript>,
    pub error: Option<String>,
}

impl SceneRun {
    pub fn from_outcome(scene_id: impl Into<String>, outcome: Result<PipelineResult, PipelineError>) -> Self {
        let scene_id = scene_id.into();
        match outcome {
            Ok(result) => Self {
                scene_id,
                status: SceneStatus::Planned,
                detected: result.detected,
                planned: Some(result.planned),
                attempts: result.attempts,
                transcripts: result.transcripts,
                error: None,
            },
            Err(err) => {
                let status = match &err {
                    PipelineError::ValidationExhausted { .. } => SceneStatus::ValidationExhausted,
                    PipelineError::EmptyDetection { .. } => SceneStatus::EmptyDetection,
                    _ => SceneStatus::ProviderError,
                };
                let attempts = match &err {
                    PipelineError::ValidationExhausted { attempts, .. } => *attempts,
                    PipelineError::Provider { attempt, stage: Stage::Planning, .. } => *attempt,
                    _ => 0,
                };
                let (detected, transcripts) = err
                    .partial()
                    .map(|p| (p.detected.clone(), p.transcripts.clone()))
                    .unwrap_or_default();
                Self {
                    scene_id,
                    status,
                    detected,
                    planned: None,
                    attempts,
                    transcripts,
                    error: Some(err.to_string()),
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderProvenance {
    pub kind: ProviderKind,
    pub model: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub temperature: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixtures_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    pub provider: ProviderProvenance,
    pub templates_hash: String,
    pub lexicon_hash: String,
    pub matrix_hash: String,
    pub scenes_hash: String,
    pub policy: ValidationPolicy,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneReport {
    pub id: String,
    pub size: usize,
    pub status: SceneStatus,
    pub ground_truth: Vec<ClassLabel>,
    pub detected: Vec<ClassLabel>,
    pub planned: Option<PackingSequence>,
    pub attempts: u32,
    /// Planned items that map to no class of the preference model.
    pub unscored_items: Vec<ClassLabel>,
    pub consistency: Option<LogScore>,
    pub satisfaction_rate: Option<f64>,
    pub success: f64,
    pub time_s: f64,
    pub tally: Tallies,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub transcripts: Vec<Transcript>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeBreakdown {
    pub scene_size: usize,
    pub scenes: usize,
    pub af1: Option<f64>,
    pub ac: Option<LogScore>,
    pub infinite_count: usize,
    pub satisfaction_rate: Option<f64>,
    pub success_rate: f64,
    pub mean_time_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub detection: DetectionMetrics,
    pub ac: Option<AverageScore>,
    pub success_rate: f64,
    /// Fraction of scenes whose planning output was accepted at all.
    pub run_success_rate: f64,
    pub satisfaction_rate: Option<f64>,
    pub mean_time_s: f64,
    pub attempts_histogram: BTreeMap<u32, usize>,
    pub by_scene_size: Vec<SizeBreakdown>,
    pub scenes: Vec<SceneReport>,
    pub provenance: Provenance,
}

/// Maps a free-form planned label to a class of the model: exact, alias or
/// plural match first, otherwise the longest class name the label contains.
pub fn resolve_planned(label: &ClassLabel, catalog: &ClassCatalog, aliases: &AliasTable) -> Option<usize> {
    catalog.resolve(label, Some(aliases)).or_else(|| {
        catalog
            .iter()
            .enumerate()
            .filter(|(_, c)| label.as_str().contains(c.as_str()))
            .max_by_key(|(i, c)| (c.as_str().len(), std::cmp::Reverse(*i)))
            .map(|(i, _)| i)
    })
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn scene_report(scene: &SceneRecord, run: &SceneRun, catalog: &ClassCatalog, m: &PreferenceMatrix, aliases: &AliasTable) -> SceneReport {
    let tally = match_labels(&run.detected, &scene.ground_truth, aliases, Some(catalog));
    let mut unscored_items = Vec::new();
    let mut indices = Vec::new();
    if let Some(plan) = &run.planned {
        for item in plan.items() {
            match resolve_planned(item, m.catalog(), aliases) {
                Some(i) => indices.push(i),
                None => unscored_items.push(item.clone()),
            }
        }
    }
    let (consistency, satisfaction_rate) = if run.planned.is_some() && !indices.is_empty() {
        (
            Some(score_indices(&indices, m).value),
            satisfaction_rate_indices(&indices, m).ok(),
        )
    } else {
        (None, None)
    };
    SceneReport {
        id: scene.id.clone(),
        size: scene.size,
        status: run.status,
        ground_truth: scene.ground_truth.clone(),
        detected: run.detected.clone(),
        planned: run.planned.clone(),
        attempts: run.attempts,
        unscored_items,
        consistency,
        satisfaction_rate,
        success: scene_success(&run.detected, run.planned.as_ref()),
        time_s: run.transcripts.iter().map(|t| t.latency_s).sum(),
        tally,
        error: run.error.clone(),
        transcripts: run.transcripts.clone(),
    }
}

fn aggregate_detection(scenes: &[&SceneReport]) -> Result<DetectionMetrics, MetricsError> {
    let mut tallies = Tallies::default();
    for s in scenes {
        tallies.merge(&s.tally);
    }
    f1_scores(&tallies)
}

fn aggregate_consistency(scenes: &[&SceneReport]) -> Option<AverageScore> {
    let scores: Vec<LogScore> = scenes.iter().filter_map(|s| s.consistency).collect();
    average_score(&scores).ok()
}

/// Combines scene runs with ground truth and the preference model into a
/// deterministic report. Scenes appear in scene-set order regardless of the
/// order of `runs`.
pub fn assemble_report(
    scenes: &SceneSet,
    runs: &[SceneRun],
    m: &PreferenceMatrix,
    aliases: &AliasTable,
    provenance: Provenance,
) -> Result<EvalReport, MetricsError> {
    if scenes.is_empty() {
        return Err(MetricsError::NoScenes);
    }
    let mut by_id: HashMap<&str, &SceneRun> = HashMap::with_capacity(runs.len());
    for run in runs {
        if by_id.insert(run.scene_id.as_str(), run).is_some() {
            return Err(MetricsError::MismatchedScenes(format!("scene `{}` has more than one run", run.scene_id)));
        }
    }
    if runs.len() != scenes.len() {
        return Err(MetricsError::MismatchedScenes(format!(
            "{} runs for {} scenes",
            runs.len(),
            scenes.len()
        )));
    }
    let reports = scenes
        .scenes
        .iter()
        .map(|scene| {
            let run = by_id
                .get(scene.id.as_str())
                .ok_or_else(|| MetricsError::MismatchedScenes(format!("no run for scene `{}`", scene.id)))?;
            Ok(scene_report(scene, run, &scenes.catalog, m, aliases))
        })
        .collect::<Result<Vec<_>, MetricsError>>()?;

    let all: Vec<&SceneReport> = reports.iter().collect();
    let detection = aggregate_detection(&all)?;
    let mut attempts_histogram = BTreeMap::new();
    for r in &reports {
        *attempts_histogram.entry(r.attempts).or_insert(0) += 1;
    }

    let mut sizes: BTreeMap<usize, Vec<&SceneReport>> = BTreeMap::new();
    for r in &reports {
        sizes.entry(r.size).or_default().push(r);
    }
    let by_scene_size = sizes
        .into_iter()
        .map(|(scene_size, group)| {
            let ac = aggregate_consistency(&group);
            SizeBreakdown {
                scene_size,
                scenes: group.len(),
                af1: aggregate_detection(&group).ok().map(|d| d.af1),
                ac: ac.map(|a| a.value),
                infinite_count: ac.map_or(0, |a| a.infinite_count),
                satisfaction_rate: mean(group.iter().filter_map(|s| s.satisfaction_rate)),
                success_rate: mean(group.iter().map(|s| s.success)).unwrap_or(0.0),
                mean_time_s: mean(group.iter().map(|s| s.time_s)).unwrap_or(0.0),
            }
        })
        .collect();

    Ok(EvalReport {
        detection,
        ac: aggregate_consistency(&all),
        success_rate: mean(reports.iter().map(|s| s.success)).unwrap_or(0.0),
        run_success_rate: mean(reports.iter().map(|s| f64::from(u8::from(s.status == SceneStatus::Planned)))).unwrap_or(0.0),
        satisfaction_rate: mean(reports.iter().filter_map(|s| s.satisfaction_rate)),
        mean_time_s: mean(reports.iter().map(|s| s.time_s)).unwrap_or(0.0),
        attempts_histogram,
        by_scene_size,
        scenes: reports,
        provenance,
    })
}

fn fmt_opt(v: Option<f64>, precision: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.precision$}"))
}

fn fmt_score(v: Option<LogScore>) -> String {
    v.map_or_else(|| "n/a".to_string(), |v| format!("{v:.3}"))
}

impl EvalReport {
    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(self).expect("report serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }

    /// Rebuilds the report from its stored transcripts alone.
    pub fn replay(
        &self,
        scenes: &SceneSet,
        m: &PreferenceMatrix,
        aliases: &AliasTable,
        lex: &ReferenceLexicon,
    ) -> Result<EvalReport, MetricsError> {
        let policy = self.provenance.policy;
        let runs: Vec<SceneRun> = self
            .scenes
            .iter()
            .map(|s| {
                let replayed = replay_transcripts(&s.transcripts, lex, &policy);
                match replayed {
                    Err(PipelineError::Replay(_)) => SceneRun {
                        scene_id: s.id.clone(),
                        status: s.status,
                        detected: s.detected.clone(),
                        planned: s.planned.clone(),
                        attempts: s.attempts,
                        transcripts: s.transcripts.clone(),
                        error: s.error.clone(),
                    },
                    other => {
                        let mut run = SceneRun::from_outcome(s.id.clone(), other);
                        // error text of transport failures is not re-derivable
                        if run.status == s.status && s.status != SceneStatus::Planned {
                            run.error.clone_from(&s.error);
                        }
                        run
                    }
                }
            })
            .collect();
        assemble_report(scenes, &runs, m, aliases, self.provenance.clone())
    }

    /// Aligned plain-text summary.
    pub fn to_text_table(&self) -> String {
        let mut out = String::new();
        let d = &self.detection;
        let _ = writeln!(out, "detection   AP {:.4}  AR {:.4}  AF1 {:.4}", d.ap, d.ar, d.af1);
        let ac = self.ac.map(|a| a.value);
        let _ = writeln!(
            out,
            "planning    aC {}  SR {:.4}  run SR {:.4}  satisfaction {}  t_frame {:.3}s",
            fmt_score(ac),
            self.success_rate,
            self.run_success_rate,
            fmt_opt(self.satisfaction_rate, 4),
            self.mean_time_s
        );
        if let Some(a) = self.ac.filter(|a| a.infinite_count > 0) {
            let _ = writeln!(out, "            {} of {} scored scenes at -inf", a.infinite_count, a.count);
        }
        let _ = writeln!(out);
        let _ = writeln!(
            out,
            "{:>5} {:>7} {:>8} {:>10} {:>6} {:>13} {:>8} {:>9}",
            "size", "scenes", "AF1", "aC", "-inf", "satisfaction", "SR", "t_frame"
        );
        for b in &self.by_scene_size {
            let _ = writeln!(
                out,
                "{:>5} {:>7} {:>8} {:>10} {:>6} {:>13} {:>8.4} {:>8.3}s",
                b.scene_size,
                b.scenes,
                fmt_opt(b.af1, 4),
                fmt_score(b.ac),
                b.infinite_count,
                fmt_opt(b.satisfaction_rate, 4),
                b.success_rate,
                b.mean_time_s
            );
        }
        let _ = writeln!(out);
        let _ = writeln!(out, "{:<12} {:>5} {:<20} {:>8} {:>10}", "scene", "size", "status", "attempts", "C");
        for s in &self.scenes {
            let status = serde_json::to_value(s.status).expect("status serializes");
            let _ = writeln!(
                out,
                "{:<12} {:>5} {:<20} {:>8} {:>10}",
                s.id,
                s.size,
                status.as_str().unwrap_or_default(),
                s.attempts,
                fmt_score(s.consistency)
            );
        }
        out
    }

    /// `scene_size,aC,satisfaction_rate` rows for plotting.
    pub fn to_csv_series(&self) -> String {
        let mut out = String::from("scene_size,aC,satisfaction_rate\n");
        for b in &self.by_scene_size {
            let ac = b.ac.map_or(String::new(), |v| v.to_string());
            let sat = b.satisfaction_rate.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(out, "{},{},{}", b.scene_size, ac, sat);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(names: &[&str]) -> Vec<ClassLabel> {
        names.iter().map(|n| ClassLabel::new(n).unwrap()).collect()
    }

    #[test]
    fn exact_match() {
        let t = match_labels(&labels(&["apples"]), &labels(&["apples"]), &AliasTable::new(), None);
        assert_eq!(t.classes["apples"], ClassTally { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn plural_match() {
        let t = match_labels(&labels(&["apple"]), &labels(&["apples"]), &AliasTable::new(), None);
        assert_eq!(t.classes["apples"].tp, 1);
        assert_eq!(t.classes.len(), 1);
    }

    #[test]
    fn set_difference() {
        let t = match_labels(
            &labels(&["apples", "dragonfruit"]),
            &labels(&["apples", "bananas"]),
            &AliasTable::new(),
            None,
        );
        assert_eq!(t.classes["apples"].tp, 1);
        assert_eq!(t.classes["bananas"].fn_, 1);
        assert_eq!(t.classes["dragonfruit"].fp, 1);
    }

    #[test]
    fn aliases_and_duplicates() {
        let aliases: AliasTable = [(ClassLabel::new("water bottle").unwrap(), ClassLabel::new("bottle").unwrap())]
            .into_iter()
            .collect();
        let t = match_labels(&labels(&["water bottle", "bottle"]), &labels(&["bottle"]), &aliases, None);
        assert_eq!(t.classes["bottle"], ClassTally { tp: 1, fp: 0, fn_: 0 });
    }

    #[test]
    fn hand_computed_f1() {
        let mut acc = Tallies::default();
        acc.merge(&match_labels(&labels(&["milk"]), &labels(&["milk"]), &AliasTable::new(), None));
        acc.merge(&match_labels(&labels(&["eggs"]), &labels(&["milk", "eggs"]), &AliasTable::new(), None));
        acc.merge(&match_labels(&labels(&["milk", "bread"]), &labels(&["bread"]), &AliasTable::new(), None));
        let m = f1_scores(&acc).unwrap();
        let milk = m.per_class["milk"];
        assert_eq!((milk.tp, milk.fp, milk.fn_), (1, 1, 1));
        assert_eq!(milk.precision, 0.5);
        assert_eq!(milk.recall, 0.5);
        assert_eq!(milk.f1, 0.5);
    }

    #[test]
    fn perfect_detection() {
        let t = match_labels(&labels(&["a", "b"]), &labels(&["a", "b"]), &AliasTable::new(), None);
        let m = f1_scores(&t).unwrap();
        assert_eq!((m.ap, m.ar, m.af1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn false_positive_only_classes_do_not_enter_averages() {
        let t = match_labels(&labels(&["a", "zzz"]), &labels(&["a"]), &AliasTable::new(), None);
        let m = f1_scores(&t).unwrap();
        assert_eq!(m.af1, 1.0);
        assert_eq!(m.per_class["zzz"].precision, 0.0);
    }

    #[test]
    fn no_ground_truth() {
        assert!(matches!(f1_scores(&Tallies::default()), Err(MetricsError::NoGroundTruth)));
    }

    #[test]
    fn success_examples() {
        let detected = labels(&["a", "b", "c", "d"]);
        let perm = PackingSequence::new(labels(&["d", "c", "b", "a"]));
        assert_eq!(scene_success(&detected, Some(&perm)), 1.0);
        assert_eq!(scene_success(&detected, None), 0.0);
        let partial = PackingSequence::new(labels(&["a", "b", "c", "zz"]));
        assert_eq!(scene_success(&detected, Some(&partial)), 0.75);
        let rate = success_rate(&[(&detected, Some(&perm)), (&detected, None)]).unwrap();
        assert_eq!(rate, 0.5);
        assert!(success_rate(&[]).is_err());
    }

    #[test]
    fn planned_label_resolution() {
        let catalog = ClassCatalog::from_names(&["canned beans", "eggs", "bell pepper", "pepper"]).unwrap();
        let aliases = AliasTable::new();
        let l = |s: &str| ClassLabel::new(s).unwrap();
        assert_eq!(resolve_planned(&l("canned beans (sturdy)"), &catalog, &aliases), Some(0));
        assert_eq!(resolve_planned(&l("egg"), &catalog, &aliases), Some(1));
        assert_eq!(resolve_planned(&l("red bell pepper"), &catalog, &aliases), Some(2));
        assert_eq!(resolve_planned(&l("oranges"), &catalog, &aliases), None);
    }
}
