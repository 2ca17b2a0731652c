#![allow(dead_code)]

use packorder_core::preference::{MatrixOrigin, SurveySequence};
use packorder_core::{ClassCatalog, ClassLabel, Direction, PreferenceMatrix, SurveyCorpus};
use proptest::prelude::*;

pub fn label(name: &str) -> ClassLabel {
    ClassLabel::new(name).unwrap()
}

pub fn labels(names: &[&str]) -> Vec<ClassLabel> {
    names.iter().map(|n| label(n)).collect()
}

pub fn class_names(n: usize) -> Vec<String> {
    (0..n).map(|i| format!("item {i:02}")).collect()
}

pub fn catalog(n: usize) -> ClassCatalog {
    ClassCatalog::from_names(&class_names(n)).unwrap()
}

/// Bottom-first corpus over `pool` classes: sequences of 2..=pool distinct items.
pub fn corpus_strategy(pool: usize, max_sequences: usize) -> impl Strategy<Value = SurveyCorpus> {
    let names = class_names(pool);
    let seq = proptest::sample::subsequence(names, 2..=pool).prop_shuffle();
    proptest::collection::vec(seq, 1..=max_sequences).prop_map(|seqs| SurveyCorpus {
        direction: Direction::BottomFirst,
        sequences: seqs
            .into_iter()
            .enumerate()
            .map(|(i, items)| SurveySequence {
                participant: format!("p{i}"),
                items: items.iter().map(|n| label(n)).collect(),
            })
            .collect(),
    })
}

/// Probability for one pair: exact 0 and 1 show up alongside interior values
/// when `allow_extremes` is set.
fn pair_prob(allow_extremes: bool) -> BoxedStrategy<f64> {
    if allow_extremes {
        prop_oneof![1 => Just(0.0), 1 => Just(1.0), 1 => Just(0.5), 6 => 0.001f64..0.999].boxed()
    } else {
        (0.001f64..0.999).boxed()
    }
}

#[allow(clippy::needless_range_loop)]
pub fn matrix_from_upper(n: usize, upper: &[f64]) -> PreferenceMatrix {
    let mut rows = vec![vec![0.0; n]; n];
    let mut it = upper.iter();
    for i in 0..n {
        for k in i + 1..n {
            let p = *it.next().unwrap();
            rows[i][k] = p;
            rows[k][i] = 1.0 - p;
        }
    }
    PreferenceMatrix::from_probabilities(catalog(n), rows, MatrixOrigin::Built).unwrap()
}

pub fn matrix_strategy(n: std::ops::RangeInclusive<usize>, allow_extremes: bool) -> impl Strategy<Value = PreferenceMatrix> {
    n.prop_flat_map(move |n| {
        proptest::collection::vec(pair_prob(allow_extremes), n * (n - 1) / 2).prop_map(move |upper| matrix_from_upper(n, &upper))
    })
}

/// Pair-by-pair sum of ln prob written out independently of the library.
pub fn oracle_score(indices: &[usize], m: &PreferenceMatrix) -> f64 {
    let mut pairs = Vec::new();
    for q in (0..indices.len()).rev() {
        for p in (0..q).rev() {
            if indices[p] != indices[q] {
                pairs.push((indices[p], indices[q]));
            }
        }
    }
    pairs.iter().map(|&(lower, upper)| m.prob(lower, upper).ln()).sum()
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a == b) || (a - b).abs() <= tol
}
