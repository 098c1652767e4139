use std::path::Path;

use irt_partition::dataset::{Dataset, OpenMlClient, PositiveClass};
use irt_partition::evaluation::{
    compute_metrics, evaluate_dataset, evaluate_partition, random_grid_search, search_candidates, select_best,
    write_metrics_csv, Metric, MetricSet, TuningConfig,
};
use irt_partition::learners::{Family, HyperParamManifest, LearnerSpec, DEFAULT_MANIFEST};
use irt_partition::partition::{build_plan, PartitionStrategy};
use proptest::prelude::*;

const FAST: [Family; 3] = [Family::DecisionTree, Family::Knn, Family::Lda];

fn manifest() -> HyperParamManifest {
    HyperParamManifest::parse(DEFAULT_MANIFEST).unwrap()
}

fn heart() -> Dataset {
    let cache = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/openml-cache");
    let client = OpenMlClient {
        offline: true,
        ..OpenMlClient::default()
    };
    client.fetch(53, &cache, &PositiveClass::Minority).unwrap()
}

fn tuning(samples: usize) -> TuningConfig {
    TuningConfig {
        samples_per_family: samples,
        inner_folds: 5,
        selection_metric: Metric::Accuracy,
        seed: 4,
    }
}

fn random_plan(ds: &Dataset, seed: u64) -> irt_partition::partition::PartitionPlan {
    build_plan(PartitionStrategy::Random(seed), &ds.instance_ids, &ds.labels, &[], 0.7).unwrap()
}

#[test]
fn hand_confusion_example() {
    let m = MetricSet::from_confusion(40, 10, 5, 45);
    assert!((m.accuracy - 0.85).abs() < 1e-9);
    assert!((m.precision - 0.8).abs() < 1e-9);
    assert!((m.recall - 0.888_888_9).abs() < 1e-7);
    assert!((m.f1 - 0.842_105_3).abs() < 1e-7);
    assert!((m.mcc - 0.703_526_5).abs() < 1e-7);
}

#[test]
fn test_rows_never_influence_tuning_or_training() {
    let ds = heart();
    let plan = random_plan(&ds, 0);
    let (_, test_idx) = plan.indices();
    let mut poisoned = ds.clone();
    for &i in &test_idx {
        for v in poisoned.rows.row_mut(i) {
            *v = -*v * 1e3 + 17.0;
        }
        poisoned.labels[i] ^= 1;
    }
    let config = tuning(3);
    let clean = evaluate_partition(&ds, &plan, &FAST, &config, &manifest()).unwrap();
    let dirty = evaluate_partition(&poisoned, &plan, &FAST, &config, &manifest()).unwrap();
    for (a, b) in clean.iter().zip(&dirty) {
        assert!(a.failure.is_none(), "{:?}", a.failure);
        assert_eq!(a.spec, b.spec);
        assert_eq!(a.search_score, b.search_score);
        assert_eq!(a.train, b.train);
        assert_ne!(a.test, b.test);
    }
}

#[test]
fn single_candidate_search_returns_it() {
    let ds = heart();
    let config = tuning(1);
    let candidates = search_candidates(Family::Knn, &config, &manifest()).unwrap();
    assert_eq!(candidates.len(), 1);
    let out = random_grid_search(Family::Knn, &ds.full_sample(), &config, &manifest()).unwrap();
    assert_eq!(out.index, 0);
    assert_eq!(out.spec, candidates[0]);
}

#[test]
fn candidates_are_in_the_declared_space_and_seeded() {
    let m = manifest();
    for family in Family::ROSTER {
        let a = search_candidates(family, &tuning(30), &m).unwrap();
        assert_eq!(a, search_candidates(family, &tuning(30), &m).unwrap());
        assert_eq!(a.len(), 30);
        for spec in &a {
            assert!(m.space(family).unwrap().contains(&spec.hyperparams), "{spec}");
        }
    }
}

#[test]
fn tied_candidates_keep_the_earliest() {
    let ds = heart();
    let spec = LearnerSpec::new(Family::Lda, 9);
    let candidates = vec![spec.clone(), spec.clone(), spec];
    let out = select_best(&candidates, &ds.full_sample(), &tuning(3)).unwrap();
    assert_eq!(out.index, 0);
}

#[test]
fn selected_candidate_has_the_best_inner_score() {
    let ds = heart();
    let config = tuning(4);
    let sample = ds.full_sample();
    let candidates = search_candidates(Family::DecisionTree, &config, &manifest()).unwrap();
    let best = select_best(&candidates, &sample, &config).unwrap();
    for (i, c) in candidates.iter().enumerate() {
        let alone = select_best(std::slice::from_ref(c), &sample, &config).unwrap();
        assert!(alone.score <= best.score, "candidate {i}");
        if i < best.index {
            assert!(alone.score < best.score);
        }
    }
}

#[test]
fn majority_baseline_scores_the_majority_fraction() {
    let ds = heart();
    let plan = random_plan(&ds, 1);
    let entries = evaluate_partition(&ds, &plan, &[Family::Majority], &tuning(1), &manifest()).unwrap();
    let (_, test_idx) = plan.indices();
    let negatives = test_idx.iter().filter(|&&i| ds.labels[i] == 0).count();
    let test = entries[0].test.expect("majority never fails");
    assert!((test.accuracy - negatives as f64 / test_idx.len() as f64).abs() < 1e-12);
    assert_eq!((test.tp, test.fp), (0, 0));
}

#[test]
fn dataset_evaluation_is_deterministic_and_ordered() {
    let ds = heart();
    let plans: Vec<_> = (0..3).map(|s| random_plan(&ds, s)).collect();
    let config = tuning(2);
    let a = evaluate_dataset("heart", &ds, &plans, &FAST, &config, &manifest()).unwrap();
    let b = evaluate_dataset("heart", &ds, &plans, &FAST, &config, &manifest()).unwrap();
    assert_eq!(a, b);
    let order: Vec<_> = a.entries.iter().map(|e| (e.strategy, e.family)).collect();
    let expected: Vec<_> = plans
        .iter()
        .flat_map(|p| FAST.iter().map(move |&f| (p.strategy, f)))
        .collect();
    assert_eq!(order, expected);
    let tests = a.tests.as_ref().expect("three strategies, three blocks");
    assert_eq!(tests.n_blocks, 3);
    assert_eq!(tests.nemenyi_p.len(), 3);

    let mut csv = Vec::new();
    write_metrics_csv(&a, &mut csv).unwrap();
    assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 1 + 2 * 9);
    let mut json = Vec::new();
    a.write_json(&mut json).unwrap();
    let back: irt_partition::evaluation::EvaluationReport = serde_json::from_slice(&json).unwrap();
    assert_eq!(back, a);
}

proptest! {
    #[test]
    fn metric_identities(
        pairs in prop::collection::vec((0u8..2, 0u8..2), 1..200),
    ) {
        let (y, p): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        let m = compute_metrics(&y, &p).unwrap();
        for v in [m.accuracy, m.precision, m.recall, m.f1] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&m.mcc));
        prop_assert_eq!(m.tp + m.fp + m.fn_ + m.tn, y.len());
        if m.tp > 0 {
            let direct = 2.0 * m.tp as f64 / (2 * m.tp + m.fp + m.fn_) as f64;
            prop_assert!((m.f1 - direct).abs() < 1e-12);
        }
        // Flipping every prediction negates MCC.
        let flipped: Vec<u8> = p.iter().map(|v| 1 - v).collect();
        let f = compute_metrics(&y, &flipped).unwrap();
        prop_assert!((f.mcc + m.mcc).abs() < 1e-12);
        prop_assert!((f.accuracy + m.accuracy - 1.0).abs() < 1e-12);
    }
}
