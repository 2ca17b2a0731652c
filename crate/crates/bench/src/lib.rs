//! Seeded instance generators shared by the benchmarks.

use packorder_core::preference::PreferenceError;
use packorder_core::{build_matrix, synth_corpus, ClassCatalog, ClassLabel, PreferenceMatrix, SurveyCorpus, SynthSpec};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn catalog(n: usize) -> ClassCatalog {
    let names: Vec<String> = (0..n).map(|i| format!("item {i:03}")).collect();
    ClassCatalog::from_names(&names).expect("generated names are valid")
}

/// Noisy survey over `n` classes drawn around a random hidden order.
pub fn corpus(n: usize, participants: usize, seed: u64) -> SurveyCorpus {
    let cat = catalog(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    synth_corpus(&cat, &order, &SynthSpec::new(0.2, participants, seed)).expect("valid synthetic spec")
}

/// Smoothed matrix built from [`corpus`]; every pair is strictly inside (0, 1).
pub fn matrix(n: usize, seed: u64) -> Result<PreferenceMatrix, PreferenceError> {
    build_matrix(&corpus(n, 4 * n, seed), 1.0)
}

/// The first `l` classes of the matrix, shuffled.
pub fn items(m: &PreferenceMatrix, l: usize, seed: u64) -> Vec<ClassLabel> {
    let mut items: Vec<ClassLabel> = m.catalog().labels().iter().take(l).cloned().collect();
    items.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    items
}
