use std::path::{Path, PathBuf};

use irt_partition::dataset::{
    class_counts, parse_csv, stratified_label_folds, write_csv, Dataset, DatasetSchema, FeatureKind, FeatureMatrix,
    OpenMlClient, PositiveClass,
};
use irt_partition::Error;
use proptest::prelude::*;

fn vendored_cache() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/openml-cache")
}

fn offline() -> OpenMlClient {
    OpenMlClient {
        offline: true,
        ..OpenMlClient::default()
    }
}

#[test]
fn vendored_datasets_have_the_published_shapes() {
    // (id, instances, features, minority count)
    for (id, n, d, minority) in [(37, 768, 8, 268), (53, 270, 13, 120), (15, 699, 9, 241)] {
        let ds = offline().fetch(id, &vendored_cache(), &PositiveClass::Minority).unwrap();
        assert_eq!((ds.len(), ds.n_features()), (n, d), "dataset {id}");
        assert_eq!(class_counts(&ds), (minority, n - minority), "dataset {id}");
        ds.validate_for_pipeline().unwrap();
    }
}

#[test]
fn diabetes_majority_fraction() {
    let ds = offline().fetch(37, &vendored_cache(), &PositiveClass::Minority).unwrap();
    let (pos, neg) = class_counts(&ds);
    assert_eq!(pos + neg, 768);
    assert!((neg as f64 / 768.0 - 0.651).abs() <= 0.5 / 768.0 + 1e-3);
    assert_eq!(ds.schema.positive_label, "tested_positive");
}

#[test]
fn breast_w_missing_values_are_imputed() {
    let ds = offline().fetch(15, &vendored_cache(), &PositiveClass::Minority).unwrap();
    assert!(ds.rows.rows().flatten().all(|v| v.is_finite()));
    assert_eq!(ds.schema.positive_label, "malignant");
}

fn copy_entry(id: u64, to: &Path) {
    let dst = to.join(id.to_string());
    std::fs::create_dir_all(&dst).unwrap();
    for f in ["dataset.arff", "meta.json"] {
        std::fs::copy(vendored_cache().join(id.to_string()).join(f), dst.join(f)).unwrap();
    }
}

#[test]
fn cache_hits_need_no_network_and_are_stable() {
    let dir = tempfile::tempdir().unwrap();
    copy_entry(53, dir.path());
    // An unreachable base URL proves no request is made.
    let client = OpenMlClient {
        base_url: "http://127.0.0.1:9".into(),
        ..OpenMlClient::default()
    };
    let a = client.fetch(53, dir.path(), &PositiveClass::Minority).unwrap();
    let b = offline().fetch(53, dir.path(), &PositiveClass::Minority).unwrap();
    assert_eq!(a, b);
    assert_eq!((a.len(), a.n_features()), (270, 13));
}

#[test]
fn tampered_cache_fails_the_checksum() {
    let dir = tempfile::tempdir().unwrap();
    copy_entry(53, dir.path());
    let arff = dir.path().join("53/dataset.arff");
    let mut text = std::fs::read_to_string(&arff).unwrap();
    text.push_str("% trailing comment\n");
    std::fs::write(&arff, text).unwrap();
    let err = offline().fetch(53, dir.path(), &PositiveClass::Minority).unwrap_err();
    assert!(matches!(err, Error::ChecksumMismatch { id: 53, .. }), "{err}");
}

#[test]
fn unreachable_server_without_cache_is_a_network_error() {
    let dir = tempfile::tempdir().unwrap();
    let client = OpenMlClient {
        base_url: "http://127.0.0.1:9".into(),
        timeout: std::time::Duration::from_secs(5),
        ..OpenMlClient::default()
    };
    assert!(matches!(
        client.fetch(53, dir.path(), &PositiveClass::Minority),
        Err(Error::Network(_))
    ));
}

fn arb_dataset() -> impl Strategy<Value = Dataset> {
    (2usize..40, 1usize..4, any::<bool>()).prop_flat_map(|(n, d, nominal_first)| {
        (
            proptest::collection::vec(proptest::collection::vec(-1e6f64..1e6, d), n),
            proptest::collection::vec(0u8..2, n),
            proptest::collection::vec(0usize..3, n),
        )
            .prop_map(move |(mut rows, mut labels, codes)| {
                labels[0] = 0;
                labels[1] = 1;
                let mut kinds = vec![FeatureKind::Numeric; d];
                if nominal_first {
                    // Codes in first-appearance order, as the parser assigns them.
                    let mut order: Vec<usize> = Vec::new();
                    for (row, &c) in rows.iter_mut().zip(&codes) {
                        let pos = order.iter().position(|&o| o == c).unwrap_or_else(|| {
                            order.push(c);
                            order.len() - 1
                        });
                        row[0] = pos as f64;
                    }
                    kinds[0] = FeatureKind::Nominal(order.iter().map(|c| format!("lvl{c}")).collect());
                }
                let schema = DatasetSchema {
                    feature_names: (0..d).map(|j| format!("f{j}")).collect(),
                    feature_kinds: kinds,
                    target_name: "class".into(),
                    positive_label: "yes".into(),
                    negative_label: "no".into(),
                };
                Dataset::new(schema, FeatureMatrix::from_rows(&rows).unwrap(), labels).unwrap()
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn csv_round_trip_is_identity(ds in arb_dataset()) {
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        let back = parse_csv(&buf, "class", &PositiveClass::Label("yes".into())).unwrap();
        prop_assert_eq!(&back.rows, &ds.rows);
        prop_assert_eq!(&back.labels, &ds.labels);
        prop_assert_eq!(&back.instance_ids, &ds.instance_ids);
    }

    #[test]
    fn folds_are_balanced(
        labels in proptest::collection::vec(0u8..2, 20..300),
        k in 2usize..11,
        seed in any::<u64>(),
    ) {
        let pos = labels.iter().filter(|&&l| l == 1).count();
        prop_assume!(pos >= k && labels.len() - pos >= k);
        let f = stratified_label_folds(&labels, k, seed).unwrap();
        let sizes = f.sizes();
        prop_assert!(sizes.iter().all(|&s| s > 0));
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        for class in [0u8, 1] {
            let mut per = vec![0usize; k];
            for (i, &fold) in f.fold_of.iter().enumerate() {
                if labels[i] == class {
                    per[fold] += 1;
                }
            }
            prop_assert!(per.iter().max().unwrap() - per.iter().min().unwrap() <= 1);
        }
        prop_assert_eq!(&f, &stratified_label_folds(&labels, k, seed).unwrap());
    }
}

#[test]
fn ilpd_class_counts_give_the_expected_fold_shapes() {
    // 416 negatives and 167 positives, counted per fold by brute force.
    let labels: Vec<u8> = (0..583).map(|i| u8::from(i < 167)).collect();
    let f = stratified_label_folds(&labels, 10, 7).unwrap();
    for fold in 0..10 {
        let members = f.members(fold);
        let pos = members.iter().filter(|&&i| labels[i] == 1).count();
        let neg = members.len() - pos;
        assert!((58..=59).contains(&members.len()));
        assert!((16..=17).contains(&pos), "fold {fold}: {pos} positives");
        assert!((41..=42).contains(&neg), "fold {fold}: {neg} negatives");
    }
}
