//! Perception and planning text pipeline: prompt rendering, parsing of
//! comma-separated model output, length-based outlier rejection, plan
//! validation against the detected items and the retry loop.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label::ClassLabel;
use crate::preference::dedup_first_occurrence;
use crate::provider::{ChatMessage, ChatProvider, ImagePayload, ProviderError, Role, TokenUsage};
use crate::scoring::PackingSequence;

pub const ITEM_LIST_PLACEHOLDER: &str = "item_list";
pub const MIN_LEXICON_ENTRIES: usize = 100;

const DEFAULT_LEXICON: &str = include_str!("../assets/grocery_lexicon.txt");

const PERCEPTION_SYSTEM: &str = "You are an intelligent AI, assisting a robot in packing a bag of groceries. \
As a first step, you need to identify the items in the image. Answer in a comma separated string. \
For example, if the image contains apples and bananas, you should answer \"apples, bananas\".";
const PERCEPTION_USER: &str = "Which grocery items are on the image?";
const PLANNING_SYSTEM: &str = "You are an intelligent AI, assisting a robot in packing a bag of groceries. \
You are provided with a list of grocery items. The bag should be packed so that no item is damaged. \
Answer in a comma separated string. The first item on the list is loaded first and is thus the lowest in the bag. \
For example, if the list contains bricks and eggs, you should answer 'bricks, eggs'.";
const PLANNING_USER: &str = "How should the following items be loaded? {item_list}";

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("template error: {0}")]
    Template(String),
    #[error("invalid validation policy: {0}")]
    Policy(String),
    #[error("no items to plan")]
    NoItems,
    #[error("no usable item labels in perception response")]
    EmptyDetection { partial: Box<PartialRun> },
    #[error("planning output failed validation {attempts} time(s); last response: {last_response:?}")]
    ValidationExhausted {
        attempts: u32,
        last_response: String,
        partial: Box<PartialRun>,
    },
    #[error("{stage} call failed on attempt {attempt}: {source}")]
    Provider {
        stage: Stage,
        attempt: u32,
        #[source]
        source: ProviderError,
        partial: Box<PartialRun>,
    },
    #[error("transcript log does not describe a complete run: {0}")]
    Replay(String),
}

impl PipelineError {
    /// Detected items and transcripts gathered before the failure, if any.
    pub fn partial(&self) -> Option<&PartialRun> {
        match self {
            PipelineError::EmptyDetection { partial }
            | PipelineError::ValidationExhausted { partial, .. }
            | PipelineError::Provider { partial, .. } => Some(partial),
            _ => None,
        }
    }
}

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon has {0} entries; at least {MIN_LEXICON_ENTRIES} are required")]
    TooSmall(usize),
    #[error("lexicon entry lengths have zero spread")]
    ZeroSpread,
    #[error("lexicon line {line}: {message}")]
    BadEntry { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Perception,
    Planning,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Stage::Perception => "perception",
            Stage::Planning => "planning",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MessageTemplate {
    pub role: Role,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PromptTemplate {
    pub messages: Vec<MessageTemplate>,
}

impl PromptTemplate {
    fn uses(&self, placeholder: &str) -> bool {
        let token = format!("{{{placeholder}}}");
        self.messages.iter().any(|m| m.text.contains(&token))
    }

    /// Substitutes `{name}` placeholders and attaches the image to the last
    /// user message.
    pub fn render(&self, bindings: &[(&str, &str)], image: Option<&ImagePayload>) -> Result<Vec<ChatMessage>, PipelineError> {
        if self.messages.is_empty() {
            return Err(PipelineError::Template("template has no messages".into()));
        }
        let mut rendered = Vec::with_capacity(self.messages.len());
        for (i, message) in self.messages.iter().enumerate() {
            let mut text = message.text.clone();
            for (name, value) in bindings {
                text = text.replace(&format!("{{{name}}}"), value);
            }
            if let Some(name) = find_placeholder(&text) {
                return Err(PipelineError::Template(format!("unbound placeholder {{{name}}} in message {i}")));
            }
            if text.trim().is_empty() {
                return Err(PipelineError::Template(format!("message {i} renders empty")));
            }
            rendered.push(ChatMessage::new(message.role, text));
        }
        if let Some(image) = image {
            let target = rendered
                .iter_mut()
                .rev()
                .find(|m| m.role == Role::User)
                .ok_or_else(|| PipelineError::Template("no user message to carry the image".into()))?;
            target.image = Some(image.clone());
        }
        Ok(rendered)
    }
}

fn find_placeholder(text: &str) -> Option<&str> {
    let mut rest = text;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        if let Some(close) = after.find('}') {
            let name = &after[..close];
            let mut chars = name.chars();
            if chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_')
                && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
            {
                return Some(name);
            }
        }
        rest = after;
    }
    None
}

/// The perception and planning prompts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub perception: PromptTemplate,
    pub planning: PromptTemplate,
}

impl Default for TemplateSet {
    fn default() -> Self {
        let template = |system: &str, user: &str| PromptTemplate {
            messages: vec![
                MessageTemplate {
                    role: Role::System,
                    text: system.to_string(),
                },
                MessageTemplate {
                    role: Role::User,
                    text: user.to_string(),
                },
            ],
        };
        Self {
            perception: template(PERCEPTION_SYSTEM, PERCEPTION_USER),
            planning: template(PLANNING_SYSTEM, PLANNING_USER),
        }
    }
}

impl TemplateSet {
    pub fn from_json(text: &str) -> Result<Self, PipelineError> {
        let set: TemplateSet = serde_json::from_str(text).map_err(|e| PipelineError::Template(e.to_string()))?;
        set.check()?;
        Ok(set)
    }

    pub fn check(&self) -> Result<(), PipelineError> {
        if !self.planning.uses(ITEM_LIST_PLACEHOLDER) {
            return Err(PipelineError::Template("planning template never uses {item_list}".into()));
        }
        self.perception.render(&[], None)?;
        Ok(())
    }

    pub fn content_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("templates serialize");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }
}

pub fn render_perception_prompt(t: &PromptTemplate, image: Option<&ImagePayload>) -> Result<Vec<ChatMessage>, PipelineError> {
    t.render(&[], image)
}

/// Renders the planning prompt with the items joined by `", "`.
pub fn render_planning_prompt(items: &[ClassLabel], t: &PromptTemplate) -> Result<Vec<ChatMessage>, PipelineError> {
    if items.is_empty() {
        return Err(PipelineError::NoItems);
    }
    let list = join_labels(items);
    t.render(&[(ITEM_LIST_PLACEHOLDER, &list)], None)
}

pub fn join_labels(items: &[ClassLabel]) -> String {
    items.iter().map(ClassLabel::as_str).collect::<Vec<_>>().join(", ")
}

/// Reference list of common grocery labels; its length spread sets the
/// outlier threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceLexicon {
    entries: Vec<ClassLabel>,
    sigma: f64,
}

impl ReferenceLexicon {
    pub fn new(entries: Vec<ClassLabel>) -> Result<Self, LexiconError> {
        if entries.len() < MIN_LEXICON_ENTRIES {
            return Err(LexiconError::TooSmall(entries.len()));
        }
        let lengths: Vec<f64> = entries.iter().map(|e| e.char_len() as f64).collect();
        let n = lengths.len() as f64;
        let mean = lengths.iter().sum::<f64>() / n;
        let variance = lengths.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / n;
        let sigma = variance.sqrt();
        if sigma <= 0.0 {
            return Err(LexiconError::ZeroSpread);
        }
        Ok(Self { entries, sigma })
    }

    /// One label per line; blank lines and `#` comments are skipped.
    pub fn from_text(text: &str) -> Result<Self, LexiconError> {
        let mut entries = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let label = ClassLabel::new(line).map_err(|e| LexiconError::BadEntry {
                line: i + 1,
                message: e.to_string(),
            })?;
            entries.push(label);
        }
        Self::new(entries)
    }

    pub fn entries(&self) -> &[ClassLabel] {
        &self.entries
    }

    /// Population standard deviation of entry lengths in characters.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for entry in &self.entries {
            hasher.update(entry.as_str().as_bytes());
            hasher.update(b"\n");
        }
        hex::encode(hasher.finalize())
    }
}

impl Default for ReferenceLexicon {
    fn default() -> Self {
        Self::from_text(DEFAULT_LEXICON).expect("bundled lexicon is valid")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ValidationPolicy {
    pub match_threshold: f64,
    pub max_attempts: u32,
    pub outlier_multiplier: f64,
}

impl Default for ValidationPolicy {
    fn default() -> Self {
        Self {
            match_threshold: 0.30,
            max_attempts: 3,
            outlier_multiplier: 6.0,
        }
    }
}

impl ValidationPolicy {
    pub fn check(&self) -> Result<(), PipelineError> {
        if !(self.match_threshold > 0.0 && self.match_threshold <= 1.0) {
            return Err(PipelineError::Policy(format!("match_threshold must be in (0, 1], got {}", self.match_threshold)));
        }
        if self.max_attempts == 0 {
            return Err(PipelineError::Policy("max_attempts must be at least 1".into()));
        }
        if self.outlier_multiplier <= 0.0 || !self.outlier_multiplier.is_finite() {
            return Err(PipelineError::Policy(format!(
                "outlier_multiplier must be positive, got {}",
                self.outlier_multiplier
            )));
        }
        Ok(())
    }
}

fn clean_fragment(fragment: &str) -> Option<ClassLabel> {
    let quotes: &[char] = &['"', '\'', '`', '\u{201c}', '\u{201d}', '\u{2018}', '\u{2019}'];
    let mut s = fragment.trim();
    loop {
        let next = s.trim_matches(quotes).trim_end_matches('.').trim();
        if next == s {
            break;
        }
        s = next;
    }
    ClassLabel::new(s).ok()
}

/// Splits at commas and normalizes each fragment, dropping empty ones.
pub fn parse_sequence(raw: &str) -> Vec<ClassLabel> {
    raw.split(',').filter_map(clean_fragment).collect()
}

/// Parses a perception response into labels, discarding fragments longer than
/// `outlier_multiplier * sigma` characters. Order and duplicates are kept.
pub fn parse_detection(raw: &str, lex: &ReferenceLexicon, policy: &ValidationPolicy) -> Result<Vec<ClassLabel>, PipelineError> {
    let limit = policy.outlier_multiplier * lex.sigma();
    let labels: Vec<ClassLabel> = parse_sequence(raw)
        .into_iter()
        .filter(|label| label.char_len() as f64 <= limit)
        .collect();
    if labels.is_empty() {
        return Err(PipelineError::EmptyDetection {
            partial: Box::default(),
        });
    }
    Ok(labels)
}

/// A detected item appears in a candidate sequence when either label contains
/// the other.
pub fn appears_in(detected: &ClassLabel, candidates: &[ClassLabel]) -> bool {
    candidates
        .iter()
        .any(|c| c.as_str().contains(detected.as_str()) || detected.as_str().contains(c.as_str()))
}

pub fn matched_count(detected: &[ClassLabel], candidates: &[ClassLabel]) -> usize {
    detected.iter().filter(|d| appears_in(d, candidates)).count()
}

#[derive(Debug, Clone, PartialEq)]
pub enum PlanCheck {
    Accepted { sequence: PackingSequence, matched: usize },
    Retry { matched: usize },
}

/// Accepts the response when strictly more than `match_threshold` of the
/// detected items appear in it.
pub fn validate_plan(detected: &[ClassLabel], response: &str, policy: &ValidationPolicy) -> Result<PlanCheck, PipelineError> {
    if detected.is_empty() {
        return Err(PipelineError::NoItems);
    }
    let candidate = parse_sequence(response);
    let matched = matched_count(detected, &candidate);
    let ratio = matched as f64 / detected.len() as f64;
    if ratio > policy.match_threshold {
        Ok(PlanCheck::Accepted {
            sequence: PackingSequence::new(candidate),
            matched,
        })
    } else {
        Ok(PlanCheck::Retry { matched })
    }
}

/// Raw model output for one call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transcript {
    pub stage: Stage,
    pub attempt: u32,
    pub fingerprint: String,
    pub response: String,
    pub latency_s: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
}

impl Transcript {
    pub fn latency(&self) -> Duration {
        Duration::from_secs_f64(self.latency_s)
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PartialRun {
    pub detected: Vec<ClassLabel>,
    pub transcripts: Vec<Transcript>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineResult {
    pub detected: Vec<ClassLabel>,
    pub planned: PackingSequence,
    /// Planning calls made, including the accepted one.
    pub attempts: u32,
    pub transcripts: Vec<Transcript>,
}

fn call(
    provider: &dyn ChatProvider,
    messages: &[ChatMessage],
    stage: Stage,
    attempt: u32,
    run: &mut PartialRun,
) -> Result<String, PipelineError> {
    match provider.complete(messages) {
        Ok(exchange) => {
            run.transcripts.push(Transcript {
                stage,
                attempt,
                fingerprint: exchange.fingerprint,
                response: exchange.response.clone(),
                latency_s: exchange.latency.as_secs_f64(),
                usage: exchange.usage,
            });
            Ok(exchange.response)
        }
        Err(source) => Err(PipelineError::Provider {
            stage,
            attempt,
            source,
            partial: Box::new(std::mem::take(run)),
        }),
    }
}

fn plan_loop(
    provider: &dyn ChatProvider,
    template: &PromptTemplate,
    policy: &ValidationPolicy,
    mut run: PartialRun,
) -> Result<PipelineResult, PipelineError> {
    let messages = render_planning_prompt(&run.detected, template)?;
    let mut last_response = String::new();
    for attempt in 1..=policy.max_attempts {
        last_response = call(provider, &messages, Stage::Planning, attempt, &mut run)?;
        if let PlanCheck::Accepted { sequence, .. } = validate_plan(&run.detected, &last_response, policy)? {
            return Ok(PipelineResult {
                detected: run.detected,
                planned: sequence,
                attempts: attempt,
                transcripts: run.transcripts,
            });
        }
    }
    Err(PipelineError::ValidationExhausted {
        attempts: policy.max_attempts,
        last_response,
        partial: Box::new(run),
    })
}

/// Perception call, parsing and dedup, then planning calls until a response
/// passes validation or the attempt budget runs out.
pub fn run_pipeline(
    image: Option<&ImagePayload>,
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
    lex: &ReferenceLexicon,
    policy: &ValidationPolicy,
) -> Result<PipelineResult, PipelineError> {
    policy.check()?;
    let mut run = PartialRun::default();
    let messages = render_perception_prompt(&templates.perception, image)?;
    let raw = call(provider, &messages, Stage::Perception, 1, &mut run)?;
    run.detected = match parse_detection(&raw, lex, policy) {
        Ok(labels) => dedup_first_occurrence(&labels),
        Err(_) => {
            return Err(PipelineError::EmptyDetection {
                partial: Box::new(run),
            })
        }
    };
    plan_loop(provider, &templates.planning, policy, run)
}

/// Planning step alone, for an already known item list.
pub fn plan_with_provider(
    items: &[ClassLabel],
    provider: &dyn ChatProvider,
    templates: &TemplateSet,
    policy: &ValidationPolicy,
) -> Result<PipelineResult, PipelineError> {
    policy.check()?;
    if items.is_empty() {
        return Err(PipelineError::NoItems);
    }
    let run = PartialRun {
        detected: dedup_first_occurrence(items),
        transcripts: Vec::new(),
    };
    plan_loop(provider, &templates.planning, policy, run)
}

/// Re-derives a run from its stored transcripts without calling a provider.
pub fn replay_transcripts(
    transcripts: &[Transcript],
    lex: &ReferenceLexicon,
    policy: &ValidationPolicy,
) -> Result<PipelineResult, PipelineError> {
    let (perception, planning) = match transcripts.split_first() {
        Some((first, rest)) if first.stage == Stage::Perception => (first, rest),
        _ => return Err(PipelineError::Replay("first transcript must be the perception call".into())),
    };
    let mut run = PartialRun {
        detected: Vec::new(),
        transcripts: vec![perception.clone()],
    };
    run.detected = match parse_detection(&perception.response, lex, policy) {
        Ok(labels) => dedup_first_occurrence(&labels),
        Err(_) => {
            return Err(PipelineError::EmptyDetection {
                partial: Box::new(run),
            })
        }
    };
    let mut last_response = String::new();
    for (i, transcript) in planning.iter().enumerate() {
        if transcript.stage != Stage::Planning {
            return Err(PipelineError::Replay(format!("transcript {} is not a planning call", i + 1)));
        }
        run.transcripts.push(transcript.clone());
        last_response.clone_from(&transcript.response);
        if let PlanCheck::Accepted { sequence, .. } = validate_plan(&run.detected, &transcript.response, policy)? {
            return Ok(PipelineResult {
                detected: run.detected,
                planned: sequence,
                attempts: transcript.attempt,
                transcripts: run.transcripts,
            });
        }
    }
    if planning.len() as u32 >= policy.max_attempts {
        Err(PipelineError::ValidationExhausted {
            attempts: planning.len() as u32,
            last_response,
            partial: Box::new(run),
        })
    } else {
        Err(PipelineError::Replay("planning transcripts end before acceptance".into()))
    }
}
