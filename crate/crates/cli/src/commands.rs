use std::path::Path;
use std::time::Instant;

use packorder_core::metrics::{resolve_planned, Provenance, ProviderProvenance};
use packorder_core::pipeline::{plan_with_provider, render_perception_prompt, render_planning_prompt, PipelineError};
use packorder_core::planner::PlannerError;
use packorder_core::preference::dedup_first_occurrence;
use packorder_core::provider::{fingerprint, ImagePayload, ProviderError};
use packorder_core::scoring::{satisfaction_rate_indices, score_indices};
use packorder_core::{
    assemble_report, build_matrix, content_hash, load_aliases, load_scene_set, load_survey, plan, run_pipeline, AliasTable,
    ChatProvider, ClassLabel, EvalReport, Method, PackingSequence, PlanRequest, PlannerLimits, PreferenceMatrix,
    ProviderConfig, ProviderKind, ReferenceLexicon, SceneRun, SceneSet, TemplateSet, ValidationPolicy,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::args::{
    BuildModelArgs, EvaluateArgs, FingerprintArgs, PlanArgs, ProviderArgs, ProviderChoice, ReplayArgs, ScoreArgs,
};
use crate::config::FileConfig;
use crate::error::CliError;
use crate::Log;

pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

pub fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn load_matrix(path: &Path) -> Result<PreferenceMatrix, CliError> {
    Ok(PreferenceMatrix::from_json(&read_text(path)?)?)
}

pub fn load_alias_file(path: Option<&Path>) -> Result<AliasTable, CliError> {
    match path {
        Some(p) => Ok(load_aliases(p)?),
        None => Ok(AliasTable::new()),
    }
}

fn load_lexicon(path: Option<&Path>) -> Result<ReferenceLexicon, CliError> {
    match path {
        Some(p) => Ok(ReferenceLexicon::from_text(&read_text(p)?)?),
        None => Ok(ReferenceLexicon::default()),
    }
}

fn load_templates(path: Option<&Path>) -> Result<TemplateSet, CliError> {
    let templates = match path {
        Some(p) => TemplateSet::from_json(&read_text(p)?)?,
        None => TemplateSet::default(),
    };
    templates.check()?;
    Ok(templates)
}

/// Splits a command-line or file item list at commas and newlines; lines
/// starting with `#` are skipped.
pub fn parse_items(text: &str) -> Vec<ClassLabel> {
    text.lines()
        .filter(|l| !l.trim_start().starts_with('#'))
        .flat_map(|l| l.split(','))
        .filter_map(|s| ClassLabel::new(s).ok())
        .collect()
}

fn print_json<T: Serialize>(value: &T) {
    out!("{}", serde_json::to_string_pretty(value).expect("serializable output"));
}

pub fn build_model(args: &BuildModelArgs, config: &FileConfig, log: &Log) -> Result<(), CliError> {
    let corpus = load_survey(&args.survey)?;
    let alpha = args.alpha.or(config.alpha).unwrap_or(0.0);
    let m = build_matrix(&corpus, alpha)?;
    write_text(&args.out, &m.to_json())?;
    let n = m.len();
    let observed = (0..n).flat_map(|i| (i + 1..n).map(move |k| (i, k))).filter(|&(i, k)| m.observed(i, k)).count();
    log.info(format_args!("wrote {}", args.out.display()));
    out!(
        "{} classes, {} sequences, {observed} of {} pairs observed, alpha {alpha}",
        n,
        corpus.len(),
        n * n.saturating_sub(1) / 2
    );
    out!("matrix sha256 {}", m.content_hash());
    Ok(())
}

#[derive(Serialize)]
struct PairReport<'a> {
    lower: &'a ClassLabel,
    upper: &'a ClassLabel,
    prob: f64,
    log_prob: packorder_core::LogScore,
}

#[derive(Serialize)]
struct ScoreReport<'a> {
    sequence: &'a PackingSequence,
    score: packorder_core::LogScore,
    zero_pairs: usize,
    satisfaction_rate: Option<f64>,
    pairs: Vec<PairReport<'a>>,
}

pub fn score(args: &ScoreArgs, config: &FileConfig) -> Result<(), CliError> {
    let m = load_matrix(&args.matrix)?;
    let aliases = load_alias_file(args.aliases.as_deref().or(config.aliases.as_deref()))?;
    let raw = match (&args.sequence, &args.sequence_file) {
        (Some(s), _) => s.clone(),
        (None, Some(path)) => read_text(path)?,
        (None, None) => return Err(CliError::Usage("one of --sequence or --sequence-file is required".into())),
    };
    let mut items = parse_items(&raw);
    if args.top_first {
        items.reverse();
    }
    if items.is_empty() {
        return Err(CliError::Usage("the sequence is empty".into()));
    }
    let indices = PackingSequence::new(items).resolve(m.catalog(), Some(&aliases))?;
    let sequence = PackingSequence::from_indices(m.catalog(), &indices);
    let result = score_indices(&indices, &m);
    let satisfaction_rate = satisfaction_rate_indices(&indices, &m).ok();
    let report = ScoreReport {
        sequence: &sequence,
        score: result.value,
        zero_pairs: result.zero_pairs,
        satisfaction_rate,
        pairs: result
            .pair_terms
            .iter()
            .filter(|t| indices[t.lower] != indices[t.upper])
            .map(|t| PairReport {
                lower: &sequence.items()[t.lower],
                upper: &sequence.items()[t.upper],
                prob: m.prob(indices[t.lower], indices[t.upper]),
                log_prob: t.log_prob,
            })
            .collect(),
    };
    if args.json {
        print_json(&report);
        return Ok(());
    }
    out!("sequence (bottom first): {sequence}");
    out!("C = {}", report.score);
    if report.zero_pairs > 0 {
        out!("{} pair(s) never observed in this order", report.zero_pairs);
    }
    if let Some(rate) = satisfaction_rate {
        out!("constraint satisfaction rate = {rate:.4}");
    }
    for pair in &report.pairs {
        out!("  {:<24} below {:<24} p = {:.4}  ln p = {:.4}", pair.lower.as_str(), pair.upper.as_str(), pair.prob, pair.log_prob);
    }
    Ok(())
}

pub fn provider_config(args: &ProviderArgs, config: &FileConfig) -> Result<ProviderConfig, CliError> {
    let mut pc = config.provider.clone();
    if let Some(choice) = args.provider {
        pc.kind = match choice {
            ProviderChoice::Mock => ProviderKind::Mock,
            ProviderChoice::Live => ProviderKind::Live,
        };
    }
    if args.fixtures.is_some() {
        pc.fixtures.clone_from(&args.fixtures);
    }
    if args.endpoint.is_some() {
        pc.endpoint.clone_from(&args.endpoint);
    }
    if let Some(model) = &args.model {
        pc.model.clone_from(model);
    }
    if let Some(t) = args.temperature {
        pc.temperature = t;
    }
    if let Some(secs) = args.timeout {
        pc.timeout = std::time::Duration::try_from_secs_f64(secs)
            .map_err(|_| CliError::Usage(format!("invalid --timeout {secs}")))?;
    }
    if let Some(n) = args.max_in_flight {
        pc.max_in_flight = n;
    }
    if pc.kind == ProviderKind::Live && !args.live {
        return Err(CliError::Usage(
            "the live provider makes paid API calls; pass --live to confirm".into(),
        ));
    }
    pc.validate()?;
    Ok(pc)
}

fn policy(args: &ProviderArgs, config: &FileConfig) -> Result<ValidationPolicy, CliError> {
    let mut policy = config.policy;
    if let Some(t) = args.match_threshold {
        policy.match_threshold = t;
    }
    if let Some(n) = args.max_attempts {
        policy.max_attempts = n;
    }
    policy.check()?;
    Ok(policy)
}

fn limits(config: &FileConfig, restarts: Option<usize>, exact_max_items: Option<usize>) -> PlannerLimits {
    PlannerLimits {
        exact_max_items: exact_max_items.unwrap_or(config.planner.exact_max_items),
        local_search_restarts: restarts.unwrap_or(config.planner.local_search_restarts),
    }
}

#[derive(Serialize)]
struct PlanReport<'a> {
    method: Method,
    seed: u64,
    sequence: &'a PackingSequence,
    score: Option<packorder_core::LogScore>,
    satisfaction_rate: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    unscored_items: Vec<ClassLabel>,
    #[serde(skip_serializing_if = "Option::is_none")]
    attempts: Option<u32>,
}

pub fn plan_cmd(args: &PlanArgs, config: &FileConfig, log: &Log) -> Result<(), CliError> {
    let m = load_matrix(&args.matrix)?;
    let aliases = load_alias_file(args.aliases.as_deref().or(config.aliases.as_deref()))?;
    let raw_items = parse_items(&args.items);
    let seed = args.seed.or(config.seed).unwrap_or(0);

    let (sequence, attempts) = if args.method == Method::Llm {
        let pc = provider_config(&args.provider, config)?;
        let provider = pc.connect()?;
        let templates = load_templates(args.provider.templates.as_deref().or(config.templates.as_deref()))?;
        let policy = policy(&args.provider, config)?;
        let result = plan_with_provider(&raw_items, provider.as_ref(), &templates, &policy)?;
        log.debug(format_args!("{} planning call(s)", result.attempts));
        (result.planned, Some(result.attempts))
    } else {
        let items = raw_items
            .iter()
            .map(|item| {
                m.catalog()
                    .resolve(item, Some(&aliases))
                    .map(|i| m.catalog().get(i).expect("resolved").clone())
                    .ok_or_else(|| PlannerError::UnknownItem(item.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let request = PlanRequest::new(items, args.method)?
            .with_seed(seed)
            .with_limits(limits(config, args.restarts, args.exact_max_items));
        (plan(&request, &m)?, None)
    };

    let mut unscored_items = Vec::new();
    let mut indices = Vec::new();
    for item in sequence.items() {
        match resolve_planned(item, m.catalog(), &aliases) {
            Some(i) => indices.push(i),
            None => unscored_items.push(item.clone()),
        }
    }
    let report = PlanReport {
        method: args.method,
        seed,
        sequence: &sequence,
        score: (!indices.is_empty()).then(|| score_indices(&indices, &m).value),
        satisfaction_rate: satisfaction_rate_indices(&indices, &m).ok(),
        unscored_items,
        attempts,
    };
    if args.json {
        print_json(&report);
        return Ok(());
    }
    out!("{sequence}");
    match report.score {
        Some(c) => out!("C = {c}"),
        None => out!("C = n/a"),
    }
    if let Some(rate) = report.satisfaction_rate {
        out!("constraint satisfaction rate = {rate:.4}");
    }
    if !report.unscored_items.is_empty() {
        let names: Vec<&str> = report.unscored_items.iter().map(ClassLabel::as_str).collect();
        out!("not in the model: {}", names.join(", "));
    }
    out!("method {}, seed {seed}", args.method);
    Ok(())
}

struct EvalInputs {
    scenes: SceneSet,
    scenes_hash: String,
    matrix: PreferenceMatrix,
    aliases: AliasTable,
    lexicon: ReferenceLexicon,
}

fn eval_inputs(
    scenes: &Path,
    matrix: &Path,
    lexicon: Option<&Path>,
    aliases: Option<&Path>,
    enforce_catalog: bool,
    config: &FileConfig,
) -> Result<EvalInputs, CliError> {
    let scenes_bytes = std::fs::read(scenes).map_err(|e| CliError::io(scenes, e))?;
    Ok(EvalInputs {
        scenes: load_scene_set(scenes, enforce_catalog)?,
        scenes_hash: content_hash(&scenes_bytes),
        matrix: load_matrix(matrix)?,
        aliases: load_alias_file(aliases.or(config.aliases.as_deref()))?,
        lexicon: load_lexicon(lexicon.or(config.lexicon.as_deref()))?,
    })
}

fn is_fatal(err: &PipelineError) -> bool {
    matches!(
        err,
        PipelineError::Provider {
            source: ProviderError::Auth { .. } | ProviderError::MissingApiKey(_) | ProviderError::Config(_),
            ..
        }
    )
}

fn default_jobs(pc: &ProviderConfig) -> usize {
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    match pc.kind {
        ProviderKind::Live => cpus.min(pc.max_in_flight),
        ProviderKind::Mock => cpus,
    }
}

pub fn evaluate(args: &EvaluateArgs, config: &FileConfig, log: &Log) -> Result<EvalReport, CliError> {
    let inputs = eval_inputs(
        &args.scenes,
        &args.matrix,
        args.lexicon.as_deref(),
        args.aliases.as_deref(),
        args.enforce_catalog,
        config,
    )?;
    let pc = provider_config(&args.provider, config)?;
    let templates = load_templates(args.provider.templates.as_deref().or(config.templates.as_deref()))?;
    let policy = policy(&args.provider, config)?;
    let seed = args.seed.or(config.seed).unwrap_or(0);

    let images = inputs
        .scenes
        .scenes
        .iter()
        .map(|s| match &s.image {
            Some(path) => ImagePayload::from_file(path).map(Some).map_err(|e| CliError::io(path, e)),
            None => Ok(None),
        })
        .collect::<Result<Vec<_>, _>>()?;

    let provider = pc.connect()?;
    let mut jobs = args.jobs.or(config.jobs).unwrap_or_else(|| default_jobs(&pc)).max(1);
    if provider.order_sensitive() {
        log.debug(format_args!("positional fixtures: evaluating scenes one at a time"));
        jobs = 1;
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| CliError::Config(e.to_string()))?;
    log.info(format_args!("evaluating {} scenes with {jobs} job(s)", inputs.scenes.len()));

    let started = Instant::now();
    let provider: &dyn ChatProvider = provider.as_ref();
    let outcomes: Vec<_> = pool.install(|| {
        inputs
            .scenes
            .scenes
            .par_iter()
            .zip(images.par_iter())
            .map(|(scene, image)| {
                let outcome = run_pipeline(image.as_ref(), provider, &templates, &inputs.lexicon, &policy);
                log.debug(format_args!(
                    "scene {}: {}",
                    scene.id,
                    match &outcome {
                        Ok(r) => format!("accepted after {} attempt(s)", r.attempts),
                        Err(e) => e.to_string(),
                    }
                ));
                (scene.id.clone(), outcome)
            })
            .collect()
    });
    log.info(format_args!("pipeline finished in {:.2?}", started.elapsed()));

    let mut runs = Vec::with_capacity(outcomes.len());
    for (id, outcome) in outcomes {
        if let Err(err) = &outcome {
            if is_fatal(err) {
                let Err(err) = outcome else { unreachable!() };
                return Err(err.into());
            }
        }
        runs.push(SceneRun::from_outcome(id, outcome));
    }

    let fixtures_hash = match (&pc.kind, &pc.fixtures) {
        (ProviderKind::Mock, Some(path)) => Some(content_hash(&std::fs::read(path).map_err(|e| CliError::io(path, e))?)),
        _ => None,
    };
    let provenance = Provenance {
        tool_version: TOOL_VERSION.to_string(),
        provider: ProviderProvenance {
            kind: pc.kind,
            model: pc.model.clone(),
            endpoint: if pc.kind == ProviderKind::Live { pc.endpoint.clone() } else { None },
            temperature: pc.temperature,
            fixtures_hash,
        },
        templates_hash: templates.content_hash(),
        lexicon_hash: inputs.lexicon.content_hash(),
        matrix_hash: inputs.matrix.content_hash(),
        scenes_hash: inputs.scenes_hash,
        policy,
        seed,
    };
    let report = assemble_report(&inputs.scenes, &runs, &inputs.matrix, &inputs.aliases, provenance)?;

    if let Some(out) = &args.out {
        write_text(out, &report.to_json())?;
        log.info(format_args!("wrote {}", out.display()));
    }
    if let Some(csv) = &args.csv {
        write_text(csv, &report.to_csv_series())?;
        log.info(format_args!("wrote {}", csv.display()));
    }
    out!("{}", report.to_text_table().trim_end());
    Ok(report)
}

pub fn replay(args: &ReplayArgs, config: &FileConfig, log: &Log) -> Result<(), CliError> {
    let stored_text = read_text(&args.report)?;
    let stored = EvalReport::from_json(&stored_text)
        .map_err(|e| CliError::Usage(format!("{} is not an evaluation report: {e}", args.report.display())))?;
    let inputs = eval_inputs(
        &args.scenes,
        &args.matrix,
        args.lexicon.as_deref(),
        args.aliases.as_deref(),
        false,
        config,
    )?;
    if inputs.matrix.content_hash() != stored.provenance.matrix_hash {
        log.warn(format_args!("matrix differs from the one recorded in the report"));
    }
    let replayed = stored.replay(&inputs.scenes, &inputs.matrix, &inputs.aliases, &inputs.lexicon)?;
    if replayed.to_json() != stored_text {
        return Err(CliError::ReplayMismatch(args.report.clone()));
    }
    out!("replay matches {} ({} scenes)", args.report.display(), replayed.scenes.len());
    Ok(())
}

pub fn fingerprint_cmd(args: &FingerprintArgs, config: &FileConfig) -> Result<(), CliError> {
    let templates = load_templates(args.templates.as_deref().or(config.templates.as_deref()))?;
    if let Some(path) = &args.scenes {
        let set = load_scene_set(path, false)?;
        for scene in &set.scenes {
            let image = match &scene.image {
                Some(p) => Some(ImagePayload::from_file(p).map_err(|e| CliError::io(p, e))?),
                None => None,
            };
            let messages = render_perception_prompt(&templates.perception, image.as_ref())?;
            out!("{}\tperception\t{}", scene.id, fingerprint(&messages));
        }
    }
    if let Some(items) = &args.items {
        let items = dedup_first_occurrence(&parse_items(items));
        if items.is_empty() {
            return Err(CliError::Usage("--items is empty".into()));
        }
        let messages = render_planning_prompt(&items, &templates.planning)?;
        out!("-\tplanning\t{}", fingerprint(&messages));
    }
    Ok(())
}
