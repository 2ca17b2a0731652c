//! Loaders for scene ground truth, survey corpora and alias tables, and a
//! seeded generator of synthetic survey corpora.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::label::{AliasTable, ClassCatalog, ClassLabel, LabelError};
use crate::preference::{normalize_corpus, Direction, PreferenceError, SurveyCorpus, SurveySequence};

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}:{column}: {message}")]
    Schema {
        file: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("scene `{scene}` declares size {declared} but lists {actual} items")]
    SizeMismatch { scene: String, declared: usize, actual: usize },
    #[error("scene `{scene}` has {size} items, outside the declared range [{min}, {max}]")]
    OutOfRange { scene: String, size: usize, min: usize, max: usize },
    #[error("invalid size range [{min}, {max}]")]
    InvalidRange { min: usize, max: usize },
    #[error("scene id `{0}` appears more than once")]
    DuplicateScene(String),
    #[error("scene `{scene}` uses label `{label}` which is not in the catalog")]
    UnknownLabel { scene: String, label: String },
    #[error(transparent)]
    Survey(#[from] PreferenceError),
    #[error(transparent)]
    Label(#[from] LabelError),
    #[error("noise must lie in [0, 0.5], got {0}")]
    InvalidNoise(f64),
    #[error("true order must be a permutation of the {0} catalog indices")]
    InvalidOrder(usize),
    #[error("synthetic corpora need at least 2 classes")]
    CatalogTooSmall,
}

/// Hex SHA-256 of raw file contents, as recorded in report provenance.
pub fn content_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn read(path: &Path) -> Result<String, DatasetError> {
    std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_json<T: serde::de::DeserializeOwned>(text: &str, file: &str) -> Result<T, DatasetError> {
    serde_json::from_str(text).map_err(|e| DatasetError::Schema {
        file: file.to_string(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })
}

/// Ground truth of one scene.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneRecord {
    pub id: String,
    pub size: usize,
    pub ground_truth: Vec<ClassLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image: Option<PathBuf>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneSetDocument {
    catalog: Vec<ClassLabel>,
    size_range: [usize; 2],
    scenes: Vec<SceneRecord>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSet {
    pub catalog: ClassCatalog,
    pub size_range: (usize, usize),
    pub scenes: Vec<SceneRecord>,
}

impl SceneSet {
    pub fn len(&self) -> usize {
        self.scenes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scenes.is_empty()
    }

    /// Parses a scene file. Relative image paths are resolved against
    /// `base_dir`. With `enforce_catalog`, every ground-truth label must be a
    /// catalog class.
    pub fn parse(text: &str, file: &str, base_dir: Option<&Path>, enforce_catalog: bool) -> Result<Self, DatasetError> {
        let doc: SceneSetDocument = parse_json(text, file)?;
        let [min, max] = doc.size_range;
        if min > max {
            return Err(DatasetError::InvalidRange { min, max });
        }
        let catalog = ClassCatalog::new(doc.catalog)?;
        let mut ids = HashSet::new();
        let mut scenes = Vec::with_capacity(doc.scenes.len());
        for mut scene in doc.scenes {
            if !ids.insert(scene.id.clone()) {
                return Err(DatasetError::DuplicateScene(scene.id));
            }
            if scene.size != scene.ground_truth.len() {
                return Err(DatasetError::SizeMismatch {
                    scene: scene.id,
                    declared: scene.size,
                    actual: scene.ground_truth.len(),
                });
            }
            if scene.size < min || scene.size > max {
                return Err(DatasetError::OutOfRange {
                    scene: scene.id,
                    size: scene.size,
                    min,
                    max,
                });
            }
            if enforce_catalog {
                if let Some(label) = scene.ground_truth.iter().find(|l| !catalog.contains(l)) {
                    return Err(DatasetError::UnknownLabel {
                        scene: scene.id,
                        label: label.to_string(),
                    });
                }
            }
            if let (Some(image), Some(base)) = (scene.image.as_mut(), base_dir) {
                if image.is_relative() {
                    *image = base.join(&*image);
                }
            }
            scenes.push(scene);
        }
        Ok(Self {
            catalog,
            size_range: (min, max),
            scenes,
        })
    }
}

pub fn load_scene_set(path: &Path, enforce_catalog: bool) -> Result<SceneSet, DatasetError> {
    let text = read(path)?;
    SceneSet::parse(&text, &path.display().to_string(), path.parent(), enforce_catalog)
}

/// Loads a survey file and normalizes it to bottom-first.
pub fn load_survey(path: &Path) -> Result<SurveyCorpus, DatasetError> {
    let text = read(path)?;
    let corpus: SurveyCorpus = parse_json(&text, &path.display().to_string())?;
    Ok(normalize_corpus(corpus)?)
}

/// Loads a JSON object mapping free-form labels to canonical classes.
pub fn load_aliases(path: &Path) -> Result<AliasTable, DatasetError> {
    let text = read(path)?;
    parse_json(&text, &path.display().to_string())
}

/// Parameters of [`synth_corpus`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Probability of each adjacent transposition, in [0, 0.5].
    pub noise: f64,
    pub participants: usize,
    /// Item sets ordered by each participant.
    pub sets_per_participant: usize,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(noise: f64, participants: usize, seed: u64) -> Self {
        Self {
            noise,
            participants,
            sets_per_participant: 1,
            seed,
        }
    }
}

/// Draws a bottom-first corpus from a hidden true order.
///
/// Each sequence samples a random subset of at least two classes, lists it in
/// true order (`true_order[0]` lowest) and then walks the list once, swapping
/// each adjacent pair with probability `noise`.
pub fn synth_corpus(catalog: &ClassCatalog, true_order: &[usize], spec: &SynthSpec) -> Result<SurveyCorpus, DatasetError> {
    let n = catalog.len();
    if n < 2 {
        return Err(DatasetError::CatalogTooSmall);
    }
    if !(0.0..=0.5).contains(&spec.noise) {
        return Err(DatasetError::InvalidNoise(spec.noise));
    }
    let mut rank = vec![usize::MAX; n];
    for (r, &class) in true_order.iter().enumerate() {
        if class >= n || rank[class] != usize::MAX {
            return Err(DatasetError::InvalidOrder(n));
        }
        rank[class] = r;
    }
    if true_order.len() != n {
        return Err(DatasetError::InvalidOrder(n));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut sequences = Vec::with_capacity(spec.participants * spec.sets_per_participant);
    for p in 0..spec.participants {
        for _ in 0..spec.sets_per_participant {
            let size = rng.random_range(2..=n);
            let mut subset = index::sample(&mut rng, n, size).into_vec();
            subset.sort_unstable_by_key(|&c| rank[c]);
            for i in 0..subset.len() - 1 {
                if rng.random_bool(spec.noise) {
                    subset.swap(i, i + 1);
                }
            }
            sequences.push(SurveySequence {
                participant: format!("p{:03}", p + 1),
                items: subset
                    .into_iter()
                    .map(|c| catalog.get(c).expect("index in range").clone())
                    .collect(),
            });
        }
    }
    Ok(SurveyCorpus {
        direction: Direction::BottomFirst,
        sequences,
    })
}
