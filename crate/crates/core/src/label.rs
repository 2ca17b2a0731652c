//! Grocery class labels, the class catalog and the alias table.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LabelError {
    #[error("label is empty after normalization")]
    Empty,
    #[error("label `{0}` contains a comma")]
    ContainsComma(String),
    #[error("class `{0}` appears more than once in the catalog")]
    DuplicateClass(String),
}

/// Lowercases, trims and collapses runs of inner whitespace to one space.
pub fn normalize_text(raw: &str) -> String {
    raw.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// A normalized grocery class name.
///
/// Always lowercase, trimmed, with single inner spaces and no commas, since
/// commas separate items on the model wire format.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct ClassLabel(String);

impl ClassLabel {
    pub fn new(raw: &str) -> Result<Self, LabelError> {
        let normalized = normalize_text(raw);
        if normalized.is_empty() {
            return Err(LabelError::Empty);
        }
        if normalized.contains(',') {
            return Err(LabelError::ContainsComma(normalized));
        }
        Ok(Self(normalized))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Length in characters, as used by the outlier filter.
    pub fn char_len(&self) -> usize {
        self.0.chars().count()
    }
}

impl TryFrom<String> for ClassLabel {
    type Error = LabelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(&value)
    }
}

impl From<ClassLabel> for String {
    fn from(label: ClassLabel) -> Self {
        label.0
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl AsRef<str> for ClassLabel {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// Naive singular/plural equivalence: equal, or one is the other plus `s` or `es`.
pub fn plural_equivalent(a: &str, b: &str) -> bool {
    fn extends(long: &str, short: &str) -> bool {
        long.strip_prefix(short)
            .is_some_and(|rest| rest == "s" || rest == "es")
    }
    a == b || extends(a, b) || extends(b, a)
}

/// Ordered set of known classes. The position of a class is its catalog index,
/// which drives every deterministic tie-break in the planners.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClassCatalog {
    classes: Vec<ClassLabel>,
    index: HashMap<ClassLabel, usize>,
}

impl ClassCatalog {
    pub fn new(classes: Vec<ClassLabel>) -> Result<Self, LabelError> {
        let mut index = HashMap::with_capacity(classes.len());
        for (i, class) in classes.iter().enumerate() {
            if index.insert(class.clone(), i).is_some() {
                return Err(LabelError::DuplicateClass(class.to_string()));
            }
        }
        Ok(Self { classes, index })
    }

    pub fn from_names<S: AsRef<str>>(names: &[S]) -> Result<Self, LabelError> {
        let labels = names
            .iter()
            .map(|n| ClassLabel::new(n.as_ref()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(labels)
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn index_of(&self, label: &ClassLabel) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn contains(&self, label: &ClassLabel) -> bool {
        self.index.contains_key(label)
    }

    pub fn get(&self, index: usize) -> Option<&ClassLabel> {
        self.classes.get(index)
    }

    pub fn labels(&self) -> &[ClassLabel] {
        &self.classes
    }

    pub fn iter(&self) -> impl Iterator<Item = &ClassLabel> {
        self.classes.iter()
    }

    /// Resolves a label against the catalog: exact match, then alias, then
    /// plural equivalence (first catalog entry wins).
    pub fn resolve(&self, label: &ClassLabel, aliases: Option<&AliasTable>) -> Option<usize> {
        if let Some(i) = self.index_of(label) {
            return Some(i);
        }
        if let Some(target) = aliases.and_then(|a| a.get(label)) {
            if let Some(i) = self.index_of(target) {
                return Some(i);
            }
        }
        self.classes
            .iter()
            .position(|c| plural_equivalent(c.as_str(), label.as_str()))
    }
}

impl Serialize for ClassCatalog {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        self.classes.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ClassCatalog {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let classes = Vec::<ClassLabel>::deserialize(deserializer)?;
        ClassCatalog::new(classes).map_err(serde::de::Error::custom)
    }
}

/// Map from free-form (normalized) labels to canonical class labels.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AliasTable(BTreeMap<ClassLabel, ClassLabel>);

impl AliasTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, alias: ClassLabel, canonical: ClassLabel) {
        self.0.insert(alias, canonical);
    }

    pub fn get(&self, alias: &ClassLabel) -> Option<&ClassLabel> {
        self.0.get(alias)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Applies the alias if one exists, otherwise returns the label unchanged.
    pub fn canonical<'a>(&'a self, label: &'a ClassLabel) -> &'a ClassLabel {
        self.0.get(label).unwrap_or(label)
    }
}

impl FromIterator<(ClassLabel, ClassLabel)> for AliasTable {
    fn from_iter<T: IntoIterator<Item = (ClassLabel, ClassLabel)>>(iter: T) -> Self {
        Self(iter.into_iter().collect())
    }
}
