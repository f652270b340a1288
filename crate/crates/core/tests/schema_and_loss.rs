//! Schema mapping, the labeled histogram fixture, and the NLL oracle.

use std::collections::BTreeMap;

use proptest::prelude::*;
use taxoq_core::corpus::{
    annotation_histogram, load_dataset, map_annotation_to_skill, max_proportion_gap, skill_histogram,
    REFERENCE_LABEL_COUNTS,
};
use taxoq_core::fixtures::histogram_fixture;
use taxoq_core::generator::nll_loss;
use taxoq_core::Skill;

#[test]
fn seven_label_mapping() {
    let expected = [
        ("Character", Skill::Remember),
        ("Setting", Skill::Remember),
        ("Action", Skill::Understand),
        ("Feeling", Skill::Evaluate),
        ("Causal relationship", Skill::Analyze),
        ("Outcome resolution", Skill::Analyze),
        ("Prediction", Skill::Create),
    ];
    for (label, skill) in expected {
        assert_eq!(map_annotation_to_skill(label).unwrap(), skill, "{label}");
    }
    let err = map_annotation_to_skill("Dialogue").unwrap_err();
    assert!(err.to_string().contains("Dialogue"));
}

#[test]
fn histogram_fixture_is_exact() {
    let samples = histogram_fixture();
    let skills = skill_histogram(&samples);
    let expected: BTreeMap<Skill, usize> = [
        (Skill::Remember, 3),
        (Skill::Understand, 3),
        (Skill::Analyze, 2),
        (Skill::Create, 1),
        (Skill::Evaluate, 1),
    ]
    .into_iter()
    .collect();
    assert_eq!(skills, expected);
    let labels = annotation_histogram(&samples);
    assert_eq!(labels["Action"], 3);
    assert_eq!(labels["Outcome resolution"], 0);
}

#[test]
fn reference_counts_sum_per_skill() {
    let mut per_skill: BTreeMap<Skill, usize> = BTreeMap::new();
    for (label, n) in REFERENCE_LABEL_COUNTS {
        *per_skill.entry(map_annotation_to_skill(label).unwrap()).or_default() += n;
    }
    assert_eq!(per_skill[&Skill::Remember], 1802);
    assert_eq!(per_skill[&Skill::Understand], 3342);
    assert_eq!(per_skill[&Skill::Analyze], 3926);
    assert_eq!(per_skill[&Skill::Create], 486);
    assert_eq!(per_skill[&Skill::Evaluate], 1024);
}

/// Runs only when `TAXOQ_DATASET_DIR` points at the raw dataset.
#[test]
fn real_dataset_proportions_when_present() {
    let Ok(dir) = std::env::var("TAXOQ_DATASET_DIR") else {
        eprintln!("TAXOQ_DATASET_DIR not set; real-dataset proportion check skipped");
        return;
    };
    let mut samples = load_dataset(&dir, "train").unwrap();
    samples.extend(load_dataset(&dir, "dev").unwrap());
    let gap = max_proportion_gap(&samples).expect("dataset is not empty");
    assert!(gap <= 1.0, "largest proportion gap {gap:.2} points");
}

#[test]
fn nll_closed_forms() {
    let one_hot = vec![vec![0.0, 0.0, 1.0], vec![1.0, 0.0, 0.0]];
    assert_eq!(nll_loss(&one_hot, &[2, 0]).unwrap(), 0.0);
    let uniform = vec![vec![0.25; 4]; 2];
    let got = nll_loss(&uniform, &[1, 3]).unwrap();
    assert!((got - 2.0 * 4f64.ln()).abs() < 1e-9);
    assert!((got - 2.77259).abs() < 1e-5);
    assert!(nll_loss(&uniform, &[1]).is_err());
}

fn distribution(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..1.0, len).prop_map(|w| {
        let s: f64 = w.iter().sum();
        w.into_iter().map(|x| x / s).collect()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// Moving mass away from one reference token raises the loss.
    #[test]
    fn lowering_a_reference_probability_raises_loss(
        rows in prop::collection::vec(distribution(5), 1..6),
        pick in any::<prop::sample::Index>(),
        refs in prop::collection::vec(0usize..5, 6),
        shrink in 0.05f64..0.95,
    ) {
        let reference = &refs[..rows.len()];
        let step = pick.index(rows.len());
        let token = reference[step];
        let before = nll_loss(&rows, reference).unwrap();
        let mut lowered = rows.clone();
        let row = &mut lowered[step];
        let removed = row[token] * shrink;
        row[token] -= removed;
        let other = (token + 1) % row.len();
        row[other] += removed;
        let after = nll_loss(&lowered, reference).unwrap();
        prop_assert!(after > before, "{after} <= {before}");
        prop_assert!(before >= 0.0);
    }
}
