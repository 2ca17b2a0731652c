mod common;

use common::corpus_strategy;
use packorder_core::build_matrix;
use packorder_core::preference::SurveySequence;
use proptest::prelude::*;

proptest! {
    #[test]
    fn observed_pairs_are_complementary(corpus in corpus_strategy(6, 12), alpha in 0.0f64..5.0) {
        let m = build_matrix(&corpus, alpha).unwrap();
        for i in 0..m.len() {
            for k in 0..m.len() {
                if i != k && m.observed(i, k) {
                    prop_assert!((m.prob(i, k) + m.prob(k, i) - 1.0).abs() <= 1e-9);
                }
            }
        }
    }

    #[test]
    fn smoothing_moves_toward_half(corpus in corpus_strategy(5, 10), alpha in 0.01f64..5.0) {
        let raw = build_matrix(&corpus, 0.0).unwrap();
        let smooth = build_matrix(&corpus, alpha).unwrap();
        for i in 0..raw.len() {
            for k in 0..raw.len() {
                if i == k || !raw.observed(i, k) {
                    continue;
                }
                let before = (raw.prob(i, k) - 0.5).abs();
                let after = (smooth.prob(i, k) - 0.5).abs();
                if raw.prob(i, k) == 0.5 {
                    prop_assert_eq!(smooth.prob(i, k), 0.5);
                } else {
                    prop_assert!(after < before);
                    prop_assert_eq!(raw.prob(i, k) > 0.5, smooth.prob(i, k) > 0.5);
                }
            }
        }
    }

    #[test]
    fn sequence_order_does_not_matter(corpus in corpus_strategy(6, 10), seed in any::<u64>()) {
        let mut shuffled = corpus.clone();
        let n = shuffled.sequences.len();
        let mut s = seed;
        for i in (1..n).rev() {
            s = s.wrapping_mul(6_364_136_223_846_793_005).wrapping_add(1);
            shuffled.sequences.swap(i, (s >> 33) as usize % (i + 1));
        }
        prop_assert_eq!(build_matrix(&corpus, 1.0).unwrap().to_json(), build_matrix(&shuffled, 1.0).unwrap().to_json());
    }

    #[test]
    fn reversing_sequences_transposes(corpus in corpus_strategy(6, 10), alpha in 0.0f64..3.0) {
        let mut reversed = corpus.clone();
        for seq in &mut reversed.sequences {
            *seq = SurveySequence { participant: seq.participant.clone(), items: seq.items.iter().rev().cloned().collect() };
        }
        let m = build_matrix(&corpus, alpha).unwrap();
        let t = build_matrix(&reversed, alpha).unwrap();
        prop_assert_eq!(m.catalog(), t.catalog());
        for i in 0..m.len() {
            for k in 0..m.len() {
                if i != k {
                    prop_assert_eq!(m.prob(i, k), t.prob(k, i));
                    prop_assert_eq!(m.count(i, k), t.count(k, i));
                }
            }
        }
    }

    #[test]
    fn round_trip_is_lossless(corpus in corpus_strategy(6, 8), alpha in 0.0f64..3.0) {
        let m = build_matrix(&corpus, alpha).unwrap();
        let back = packorder_core::PreferenceMatrix::from_json(&m.to_json()).unwrap();
        prop_assert_eq!(&back, &m);
    }
}
