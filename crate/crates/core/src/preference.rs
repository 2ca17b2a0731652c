//! Pairwise placement-probability model built from human packing sequences.
//!
//! `prob(i, k)` is the empirical probability that class `i` is placed below
//! class `k`. Sequences are stored bottom-first internally; survey data
//! recorded top-first is reversed on ingestion.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label::{ClassCatalog, ClassLabel, LabelError};

/// Complementarity tolerance for matrices this crate produced.
pub const STRICT_COMPLEMENT_TOLERANCE: f64 = 1e-9;
/// Complementarity tolerance for hand-imported tables rounded to three decimals.
pub const IMPORTED_COMPLEMENT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum PreferenceError {
    #[error("participant `{participant}` has {distinct} distinct item(s); at least 2 are required")]
    TooFewItems { participant: String, distinct: usize },
    #[error("cannot build a preference model from an empty corpus")]
    EmptyCorpus,
    #[error("smoothing alpha must be finite and non-negative, got {0}")]
    InvalidAlpha(f64),
    #[error("corpus must be normalized to bottom-first before building a model")]
    NotBottomFirst,
    #[error("invalid matrix document at `{path}`: {reason}")]
    Document { path: String, reason: String },
    #[error("malformed matrix document: {0}")]
    Syntax(#[from] serde_json::Error),
    #[error(transparent)]
    Label(#[from] LabelError),
}

fn doc_error(path: impl Into<String>, reason: impl Into<String>) -> PreferenceError {
    PreferenceError::Document {
        path: path.into(),
        reason: reason.into(),
    }
}

/// Which end of the container the first item of a recorded sequence refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    TopFirst,
    BottomFirst,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySequence {
    pub participant: String,
    pub items: Vec<ClassLabel>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyCorpus {
    pub direction: Direction,
    pub sequences: Vec<SurveySequence>,
}

impl SurveyCorpus {
    pub fn len(&self) -> usize {
        self.sequences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sequences.is_empty()
    }
}

/// Collapses repeated classes to their first occurrence, keeping order.
pub fn dedup_first_occurrence(items: &[ClassLabel]) -> Vec<ClassLabel> {
    let mut seen = BTreeSet::new();
    items
        .iter()
        .filter(|item| seen.insert((*item).clone()))
        .cloned()
        .collect()
}

/// Brings a corpus into the canonical bottom-first form.
///
/// Duplicates inside a sequence are collapsed to their first occurrence in the
/// order recorded, then top-first sequences are reversed.
pub fn normalize_corpus(corpus: SurveyCorpus) -> Result<SurveyCorpus, PreferenceError> {
    let reverse = corpus.direction == Direction::TopFirst;
    let sequences = corpus
        .sequences
        .into_iter()
        .map(|seq| {
            let mut items = dedup_first_occurrence(&seq.items);
            if items.len() < 2 {
                return Err(PreferenceError::TooFewItems {
                    participant: seq.participant,
                    distinct: items.len(),
                });
            }
            if reverse {
                items.reverse();
            }
            Ok(SurveySequence {
                participant: seq.participant,
                items,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SurveyCorpus {
        direction: Direction::BottomFirst,
        sequences,
    })
}

/// How a matrix came to exist; decides the complementarity tolerance on load.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixOrigin {
    /// Produced by [`build_matrix`].
    #[default]
    Built,
    /// Typed in or converted from a published table with rounded entries.
    Imported,
}

impl MatrixOrigin {
    pub fn complement_tolerance(self) -> f64 {
        match self {
            MatrixOrigin::Built => STRICT_COMPLEMENT_TOLERANCE,
            MatrixOrigin::Imported => IMPORTED_COMPLEMENT_TOLERANCE,
        }
    }
}

/// Pairwise placement probabilities over a class catalog. Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceMatrix {
    catalog: ClassCatalog,
    alpha: f64,
    origin: MatrixOrigin,
    prob: Vec<f64>,
    count: Vec<u64>,
    observed: Vec<bool>,
}

/// Counts, for every ordered pair, the sequences in which `i` sits below `k`,
/// then converts the tallies to smoothed probabilities.
///
/// The class set is the sorted union of all labels, so the result does not
/// depend on the order of sequences in the corpus.
pub fn build_matrix(corpus: &SurveyCorpus, alpha: f64) -> Result<PreferenceMatrix, PreferenceError> {
    if !alpha.is_finite() || alpha < 0.0 {
        return Err(PreferenceError::InvalidAlpha(alpha));
    }
    if corpus.direction != Direction::BottomFirst {
        return Err(PreferenceError::NotBottomFirst);
    }
    if corpus.is_empty() {
        return Err(PreferenceError::EmptyCorpus);
    }

    let classes: BTreeSet<ClassLabel> = corpus
        .sequences
        .iter()
        .flat_map(|s| s.items.iter().cloned())
        .collect();
    let catalog = ClassCatalog::new(classes.into_iter().collect())?;
    let n = catalog.len();

    let mut count = vec![0u64; n * n];
    for seq in &corpus.sequences {
        let indices: Vec<usize> = dedup_first_occurrence(&seq.items)
            .iter()
            .map(|label| catalog.index_of(label).expect("label from corpus union"))
            .collect();
        for (p, &lower) in indices.iter().enumerate() {
            for &upper in &indices[p + 1..] {
                count[lower * n + upper] += 1;
            }
        }
    }

    let mut prob = vec![0.0; n * n];
    let mut observed = vec![false; n * n];
    for i in 0..n {
        for k in 0..n {
            if i == k {
                continue;
            }
            let below = count[i * n + k];
            let total = below + count[k * n + i];
            if total == 0 {
                prob[i * n + k] = 0.5;
            } else {
                observed[i * n + k] = true;
                prob[i * n + k] = (below as f64 + alpha) / (total as f64 + 2.0 * alpha);
            }
        }
    }

    Ok(PreferenceMatrix {
        catalog,
        alpha,
        origin: MatrixOrigin::Built,
        prob,
        count,
        observed,
    })
}

impl PreferenceMatrix {
    /// Wraps externally supplied probabilities (e.g. a published table).
    /// Counts are zero and every off-diagonal pair is marked observed.
    pub fn from_probabilities(
        catalog: ClassCatalog,
        rows: Vec<Vec<f64>>,
        origin: MatrixOrigin,
    ) -> Result<Self, PreferenceError> {
        let n = catalog.len();
        let observed = (0..n)
            .map(|i| (0..n).map(|k| i != k).collect())
            .collect();
        let doc = MatrixDocument {
            classes: catalog.labels().to_vec(),
            alpha: 0.0,
            origin,
            prob: rows,
            count: vec![vec![0; n]; n],
            observed,
        };
        Self::from_document(doc)
    }

    pub fn catalog(&self) -> &ClassCatalog {
        &self.catalog
    }

    pub fn len(&self) -> usize {
        self.catalog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.catalog.is_empty()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn origin(&self) -> MatrixOrigin {
        self.origin
    }

    /// Probability that class `lower` is placed below class `upper`.
    #[inline]
    pub fn prob(&self, lower: usize, upper: usize) -> f64 {
        self.prob[lower * self.len() + upper]
    }

    #[inline]
    pub fn count(&self, lower: usize, upper: usize) -> u64 {
        self.count[lower * self.len() + upper]
    }

    #[inline]
    pub fn observed(&self, lower: usize, upper: usize) -> bool {
        self.observed[lower * self.len() + upper]
    }

    pub fn index_of(&self, label: &ClassLabel) -> Option<usize> {
        self.catalog.index_of(label)
    }

    pub fn to_document(&self) -> MatrixDocument {
        let n = self.len();
        let rows = |flat: &[f64]| flat.chunks(n.max(1)).map(<[f64]>::to_vec).collect::<Vec<_>>();
        MatrixDocument {
            classes: self.catalog.labels().to_vec(),
            alpha: self.alpha,
            origin: self.origin,
            prob: if n == 0 { Vec::new() } else { rows(&self.prob) },
            count: self.count.chunks(n.max(1)).map(<[u64]>::to_vec).collect(),
            observed: self.observed.chunks(n.max(1)).map(<[bool]>::to_vec).collect(),
        }
    }

    pub fn to_json(&self) -> String {
        let mut out = serde_json::to_string_pretty(&self.to_document())
            .expect("matrix document always serializes");
        out.push('\n');
        out
    }

    pub fn from_json(text: &str) -> Result<Self, PreferenceError> {
        let doc: MatrixDocument = serde_json::from_str(text)?;
        Self::from_document(doc)
    }

    /// SHA-256 of the canonical JSON form, hex encoded.
    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }

    pub fn from_document(doc: MatrixDocument) -> Result<Self, PreferenceError> {
        let catalog = ClassCatalog::new(doc.classes)?;
        let n = catalog.len();
        if n == 0 {
            return Err(doc_error("classes", "at least one class is required"));
        }
        if !doc.alpha.is_finite() || doc.alpha < 0.0 {
            return Err(doc_error("alpha", format!("must be finite and >= 0, got {}", doc.alpha)));
        }
        let prob = flatten("prob", doc.prob, n)?;
        let count = flatten("count", doc.count, n)?;
        let observed = flatten("observed", doc.observed, n)?;

        let tolerance = doc.origin.complement_tolerance();
        for i in 0..n {
            for k in 0..n {
                let p = prob[i * n + k];
                let path = format!("prob[{i}][{k}]");
                if !(0.0..=1.0).contains(&p) {
                    return Err(doc_error(path, format!("probability {p} outside [0, 1]")));
                }
                if i == k {
                    if p != 0.0 {
                        return Err(doc_error(path, "diagonal entries must be 0"));
                    }
                    if observed[i * n + k] {
                        return Err(doc_error(format!("observed[{i}][{k}]"), "diagonal entries must be false"));
                    }
                    continue;
                }
                if observed[i * n + k] != observed[k * n + i] {
                    return Err(doc_error(format!("observed[{i}][{k}]"), "observed flags must be symmetric"));
                }
                if i < k {
                    let sum = p + prob[k * n + i];
                    if (sum - 1.0).abs() > tolerance + f64::EPSILON * 4.0 {
                        return Err(doc_error(
                            path,
                            format!("prob[{i}][{k}] + prob[{k}][{i}] = {sum}, expected 1 within {tolerance:e}"),
                        ));
                    }
                }
            }
        }

        Ok(Self {
            catalog,
            alpha: doc.alpha,
            origin: doc.origin,
            prob,
            count,
            observed,
        })
    }
}

fn flatten<T: Copy>(field: &str, rows: Vec<Vec<T>>, n: usize) -> Result<Vec<T>, PreferenceError> {
    if rows.len() != n {
        return Err(doc_error(field, format!("expected {n} rows, found {}", rows.len())));
    }
    let mut flat = Vec::with_capacity(n * n);
    for (i, row) in rows.into_iter().enumerate() {
        if row.len() != n {
            return Err(doc_error(
                format!("{field}[{i}]"),
                format!("expected {n} columns, found {}", row.len()),
            ));
        }
        flat.extend(row);
    }
    Ok(flat)
}

/// On-disk form of a [`PreferenceMatrix`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixDocument {
    pub classes: Vec<ClassLabel>,
    pub alpha: f64,
    #[serde(default)]
    pub origin: MatrixOrigin,
    pub prob: Vec<Vec<f64>>,
    pub count: Vec<Vec<u64>>,
    pub observed: Vec<Vec<bool>>,
}
