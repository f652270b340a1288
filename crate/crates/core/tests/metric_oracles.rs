//! Metrics checked against frozen values from independent implementations.
//!
//! BLEU-4 and Q-BLEU-4 values come from `oracles/ngram_oracle.py` (NLTK for
//! BLEU, a from-definition Python Q-BLEU) and are stored in
//! `oracles/ngram_oracle.json`. Alpha is compared with a pairwise
//! enumeration that never builds a coincidence matrix.

mod common;

use common::{brute_force_alpha, oracle_rows};
use proptest::prelude::*;
use taxoq_core::metrics::{bleu4, krippendorff_alpha, q_bleu4, rouge_l, MetricError, RatingMatrix};

#[test]
fn bleu4_matches_nltk_on_frozen_pairs() {
    let rows = oracle_rows();
    assert_eq!(rows.len(), 5);
    for row in rows {
        let refs: Vec<&str> = row.references.iter().map(String::as_str).collect();
        let got = bleu4(&row.candidate, &refs);
        assert!((got - row.bleu4).abs() < 1e-6, "{}: {got} vs {}", row.candidate, row.bleu4);
    }
}

#[test]
fn q_bleu4_matches_reference_implementation_on_frozen_pairs() {
    for row in oracle_rows() {
        let got = q_bleu4(&row.candidate, &row.references[0]);
        assert!((got - row.q_bleu4).abs() < 1e-6, "{}: {got} vs {}", row.candidate, row.q_bleu4);
    }
}

#[test]
fn rouge_l_hand_lcs() {
    let s = rouge_l("a b c d", "a c d");
    assert!((s.precision - 0.75).abs() < 1e-6);
    assert!((s.recall - 1.0).abs() < 1e-6);
    assert!((s.f1 - 6.0 / 7.0).abs() < 1e-6);
    // LCS "the cat on mat" = 4 of 6 and 5
    let s = rouge_l("the cat sat on the mat", "the cat lay on mat");
    assert!((s.precision - 4.0 / 6.0).abs() < 1e-6);
    assert!((s.recall - 4.0 / 5.0).abs() < 1e-6);
}

#[test]
fn alpha_disagreement_fixture() {
    let m = RatingMatrix::from_complete(&[vec!["A", "B"], vec!["B", "A"]]);
    assert!((krippendorff_alpha(&m).unwrap() - (-0.5)).abs() < 1e-12);
    assert!((brute_force_alpha(&m.items).unwrap() - (-0.5)).abs() < 1e-12);
}

fn cell() -> impl Strategy<Value = Option<String>> {
    prop_oneof![
        1 => Just(None),
        3 => prop::sample::select(vec!["a", "b", "c"]).prop_map(|s| Some(s.to_string())),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// 5 items rated by 3 raters, cells missing at random.
    #[test]
    fn alpha_matches_brute_force(items in prop::collection::vec(prop::collection::vec(cell(), 3), 5)) {
        let matrix = RatingMatrix::new(items.clone());
        match (krippendorff_alpha(&matrix), brute_force_alpha(&items)) {
            (Ok(a), Some(b)) => prop_assert!((a - b).abs() < 1e-9, "{a} vs {b}"),
            (Err(MetricError::Undefined(_)), None) => {}
            (a, b) => prop_assert!(false, "disagree on definedness: {a:?} vs {b:?}"),
        }
    }
}
