//! Packing Consistency Score: the log-likelihood of a bottom-first sequence
//! under the pairwise placement probabilities.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::label::{AliasTable, ClassCatalog, ClassLabel};
use crate::preference::PreferenceMatrix;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScoringError {
    #[error("label `{0}` is not a class of the preference model")]
    UnknownLabel(String),
    #[error("cannot average an empty list of scores")]
    EmptyAggregate,
    #[error("satisfaction rate is undefined for a sequence without two distinct classes")]
    UndefinedRate,
}

/// A log-probability on the extended real line: finite or negative infinity.
///
/// Serialized as a JSON number, or the string `"-inf"`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogScore {
    Finite(f64),
    NegInfinity,
}

impl LogScore {
    pub const ZERO: LogScore = LogScore::Finite(0.0);

    /// Natural log of a probability in [0, 1].
    pub fn ln_prob(p: f64) -> Self {
        if p <= 0.0 {
            LogScore::NegInfinity
        } else {
            LogScore::Finite(p.ln())
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v == f64::NEG_INFINITY {
            LogScore::NegInfinity
        } else {
            LogScore::Finite(v)
        }
    }

    pub fn as_f64(self) -> f64 {
        match self {
            LogScore::Finite(v) => v,
            LogScore::NegInfinity => f64::NEG_INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, LogScore::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            LogScore::Finite(v) => Some(v),
            LogScore::NegInfinity => None,
        }
    }
}

impl std::ops::Add for LogScore {
    type Output = LogScore;

    fn add(self, rhs: Self) -> Self {
        match (self, rhs) {
            (LogScore::Finite(a), LogScore::Finite(b)) => LogScore::Finite(a + b),
            _ => LogScore::NegInfinity,
        }
    }
}

impl PartialOrd for LogScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        self.as_f64().partial_cmp(&other.as_f64())
    }
}

impl fmt::Display for LogScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogScore::Finite(v) => match f.precision() {
                Some(p) => write!(f, "{v:.p$}"),
                None => write!(f, "{v}"),
            },
            LogScore::NegInfinity => f.write_str("-inf"),
        }
    }
}

impl Serialize for LogScore {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        match self {
            LogScore::Finite(v) => serializer.serialize_f64(*v),
            LogScore::NegInfinity => serializer.serialize_str("-inf"),
        }
    }
}

impl<'de> Deserialize<'de> for LogScore {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Num(v) if v.is_finite() => Ok(LogScore::Finite(v)),
            Repr::Str(s) if s == "-inf" => Ok(LogScore::NegInfinity),
            Repr::Num(v) => Err(serde::de::Error::custom(format!("non-finite score {v}"))),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("invalid score `{s}`"))),
        }
    }
}

/// An ordered list of classes, index 0 lowest in the container.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PackingSequence(Vec<ClassLabel>);

impl PackingSequence {
    pub fn new(items: Vec<ClassLabel>) -> Self {
        Self(items)
    }

    pub fn items(&self) -> &[ClassLabel] {
        &self.0
    }

    pub fn into_items(self) -> Vec<ClassLabel> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn reversed(&self) -> Self {
        Self(self.0.iter().rev().cloned().collect())
    }

    /// Maps every label to its catalog index.
    pub fn resolve(
        &self,
        catalog: &ClassCatalog,
        aliases: Option<&AliasTable>,
    ) -> Result<Vec<usize>, ScoringError> {
        self.0
            .iter()
            .map(|label| {
                catalog
                    .resolve(label, aliases)
                    .ok_or_else(|| ScoringError::UnknownLabel(label.to_string()))
            })
            .collect()
    }

    pub fn from_indices(catalog: &ClassCatalog, indices: &[usize]) -> Self {
        Self(
            indices
                .iter()
                .map(|&i| catalog.get(i).expect("index within catalog").clone())
                .collect(),
        )
    }
}

impl fmt::Display for PackingSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, item) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            f.write_str(item.as_str())?;
        }
        Ok(())
    }
}

/// Contribution of one position pair `lower < upper`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairTerm {
    pub lower: usize,
    pub upper: usize,
    pub log_prob: LogScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConsistencyScore {
    pub value: LogScore,
    /// Number of pair terms with probability zero.
    pub zero_pairs: usize,
    pub pair_terms: Vec<PairTerm>,
}

/// Scores a sequence whose labels must match catalog classes exactly.
pub fn score(seq: &PackingSequence, m: &PreferenceMatrix) -> Result<ConsistencyScore, ScoringError> {
    let indices = seq.resolve(m.catalog(), None)?;
    Ok(score_indices(&indices, m))
}

/// Sum over position pairs `p < q` of `ln prob[s_p][s_q]`. Pairs of the same
/// class contribute 0; a single item scores 0.
pub fn score_indices(indices: &[usize], m: &PreferenceMatrix) -> ConsistencyScore {
    let mut sum = 0.0;
    let mut zero_pairs = 0;
    let mut pair_terms = Vec::with_capacity(indices.len() * indices.len().saturating_sub(1) / 2);
    for (p, &lower) in indices.iter().enumerate() {
        for (q, &upper) in indices.iter().enumerate().skip(p + 1) {
            let log_prob = if lower == upper {
                LogScore::ZERO
            } else {
                LogScore::ln_prob(m.prob(lower, upper))
            };
            match log_prob {
                LogScore::Finite(v) => sum += v,
                LogScore::NegInfinity => zero_pairs += 1,
            }
            pair_terms.push(PairTerm { lower: p, upper: q, log_prob });
        }
    }
    let value = if zero_pairs > 0 {
        LogScore::NegInfinity
    } else {
        LogScore::Finite(sum)
    };
    ConsistencyScore {
        value,
        zero_pairs,
        pair_terms,
    }
}

/// Mean of a set of scores plus the number of `-inf` members.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AverageScore {
    pub value: LogScore,
    pub count: usize,
    pub infinite_count: usize,
}

pub fn average_score(scores: &[LogScore]) -> Result<AverageScore, ScoringError> {
    if scores.is_empty() {
        return Err(ScoringError::EmptyAggregate);
    }
    let infinite_count = scores.iter().filter(|s| !s.is_finite()).count();
    let value = if infinite_count > 0 {
        LogScore::NegInfinity
    } else {
        let sum: f64 = scores.iter().filter_map(|s| s.finite()).sum();
        LogScore::Finite(sum / scores.len() as f64)
    };
    Ok(AverageScore {
        value,
        count: scores.len(),
        infinite_count,
    })
}

/// Fraction of distinct-class position pairs whose order agrees with the
/// majority preference (`prob >= 0.5`).
pub fn constraint_satisfaction_rate(seq: &PackingSequence, m: &PreferenceMatrix) -> Result<f64, ScoringError> {
    let indices = seq.resolve(m.catalog(), None)?;
    satisfaction_rate_indices(&indices, m)
}

pub fn satisfaction_rate_indices(indices: &[usize], m: &PreferenceMatrix) -> Result<f64, ScoringError> {
    let mut pairs = 0usize;
    let mut satisfied = 0usize;
    for (p, &lower) in indices.iter().enumerate() {
        for &upper in &indices[p + 1..] {
            if lower == upper {
                continue;
            }
            pairs += 1;
            if m.prob(lower, upper) >= 0.5 {
                satisfied += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(ScoringError::UndefinedRate);
    }
    Ok(satisfied as f64 / pairs as f64)
}
