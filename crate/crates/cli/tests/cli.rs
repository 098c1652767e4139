use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use irt_partition::dataset::InstanceId;
use irt_partition::irt::{write_item_parameters, ItemParameters};
use irt_partition_cli::manifest::RunManifest;
use irt_partition_cli::pipeline::{self, nemenyi_file};
use irt_partition_cli::{plots, CliError, Pipeline, RunConfig};

fn cache() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/openml-cache")
}

/// A small heart-statlog run: 3 folds, 20 models, three quick families.
fn small_config(out: &Path, extra: &str) -> RunConfig {
    let text = format!(
        r#"
name = "heart"
seed = 3
out = {out:?}
folds = 3
models = 20
families = ["DT", "KNN", "LDA"]
{extra}

[dataset]
openml_id = 53
cache_dir = {cache:?}

[tuning]
samples_per_family = 2
inner_folds = 3
"#,
        out = out.display().to_string(),
        cache = cache().display().to_string(),
    );
    RunConfig::parse(&text).unwrap()
}

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_irt-partition"));
    c.env_remove(irt_partition_cli::config::CACHE_ENV);
    c
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

#[test]
fn usage_errors_exit_with_one() {
    let out = bin().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "name = \"x\"\nfolds = 0\n[dataset]\nopenml_id = 53\n");
    let out = bin().args(["matrix", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let out = bin().args(["--help"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
}

#[test]
fn bad_data_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    // One class only.
    let mut csv = String::from("x,y\n");
    for i in 0..30 {
        csv.push_str(&format!("{i},a\n"));
    }
    fs::write(dir.path().join("one.csv"), csv).unwrap();
    let cfg = write_config(
        dir.path(),
        "name = \"one\"\nout = \"out\"\n[dataset]\npath = \"one.csv\"\ntarget = \"y\"\n",
    );
    let out = bin().args(["matrix", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // Uncached dataset while offline.
    let cfg = write_config(
        dir.path(),
        "name = \"gone\"\nout = \"out2\"\n[dataset]\nopenml_id = 999999\ncache_dir = \"empty\"\n",
    );
    let out = bin().args(["matrix", "--offline", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn plotdata_without_report_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        "name = \"heart\"\nout = \"out\"\n[dataset]\nopenml_id = 53\ncache_dir = {:?}\n",
        cache().display().to_string()
    );
    let cfg = write_config(dir.path(), &body);
    let out = bin().args(["plotdata", "--offline", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("evaluate"));
}

#[test]
fn a_second_pipeline_on_the_same_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let first = Pipeline::open(small_config(dir.path(), ""), true).unwrap();
    assert!(matches!(
        Pipeline::open(small_config(dir.path(), ""), true),
        Err(CliError::Locked(_))
    ));
    drop(first);
    Pipeline::open(small_config(dir.path(), ""), true).unwrap();
}

#[test]
fn strategy_filter_restricts_evaluation_and_skips_tests() {
    let dir = tempfile::tempdir().unwrap();
    let mut p = Pipeline::open(small_config(dir.path(), "strategies = [\"Random_0\"]"), true).unwrap();
    let report = p.evaluate().unwrap();
    assert_eq!(report.entries.len(), 3);
    assert!(report.tests.is_none());
    assert!(report.tests_skipped.is_some());
    assert!(!dir.path().join(nemenyi_file("heart")).exists());
    assert!(p.manifest().warnings.iter().any(|w| w.contains("statistical tests skipped")));
    let plots = p.plotdata().unwrap();
    assert_eq!(plots.len(), 3);
    assert!(dir.path().join("plans/Random_0.csv").is_file());
    assert!(!dir.path().join("plans/Dis_min_max.csv").exists());
}

#[test]
fn stages_compose_through_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let config = small_config(dir.path(), "");
    let ds = pipeline::load_dataset(&config, true).unwrap();
    // A hand-written calibration: discrimination rises with the instance id.
    let items: Vec<ItemParameters> = ds
        .instance_ids
        .iter()
        .map(|&InstanceId(i)| ItemParameters::new(InstanceId(i), 0.5 + i as f64 / 100.0, (i % 7) as f64 - 3.0, 0.1))
        .collect();
    let mut bytes = Vec::new();
    write_item_parameters(&items, &mut bytes).unwrap();
    fs::write(dir.path().join(pipeline::ITEMS_FILE), bytes).unwrap();

    let mut p = Pipeline::open(config, true).unwrap();
    let report = p.evaluate().unwrap();
    // Evaluation used the hand-written file rather than calibrating.
    assert!(!dir.path().join(pipeline::MATRIX_FILE).exists());
    assert_eq!(report.strategies.len(), 12);
    assert_eq!(report.entries.len(), 36);
    // Dis_max_min trains on the highest-discrimination (highest id) instances per class.
    let plan = fs::read_to_string(dir.path().join("plans/Dis_max_min.csv")).unwrap();
    let last = plan.lines().last().unwrap();
    assert!(last.ends_with("train"), "{last}");

    let written = p.plotdata().unwrap();
    assert_eq!(written.len(), 4);
    for name in [plots::BOX_ACCURACY_FILE, plots::BAR_MCC_FILE, plots::LINE_F1_FILE] {
        let text = fs::read_to_string(dir.path().join("plots").join(name)).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 4, "{name}");
        assert_eq!(lines[0].split(',').count(), 13);
        assert!(lines[1].starts_with("DT,"));
    }
    let heat = fs::read_to_string(dir.path().join("plots").join(plots::HEATMAP_FILE)).unwrap();
    let grid: Vec<Vec<String>> = heat.lines().skip(1).map(|l| l.split(',').skip(1).map(String::from).collect()).collect();
    assert_eq!(grid.len(), 12);
    for i in 0..12 {
        assert_eq!(grid[i][i], "1");
        for j in 0..12 {
            assert_eq!(grid[i][j], grid[j][i]);
        }
    }

    let manifest = RunManifest::load(dir.path()).unwrap().unwrap();
    assert!(manifest.verify(dir.path()).is_empty());
    assert!(manifest.artifacts.contains_key("report"));
    assert!(manifest.timings.contains_key("evaluate"));
}

#[test]
fn full_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let body = format!(
        r#"name = "heart"
out = "out"
folds = 3
models = 20
families = ["LDA", "KNN", "DT"]
strategies = ["Dif_min_max", "Dif_balanced", "Random_1"]
[dataset]
openml_id = 53
cache_dir = {:?}
[tuning]
samples_per_family = 2
inner_folds = 3
"#,
        cache().display().to_string()
    );
    let cfg = write_config(dir.path(), &body);
    let status = bin().args(["run", "--offline", "--config"]).arg(&cfg).status().unwrap();
    assert!(status.success());
    let out = dir.path().join("out");
    for f in [
        pipeline::FOLDS_FILE,
        pipeline::MODELS_FILE,
        pipeline::MATRIX_FILE,
        pipeline::ITEMS_FILE,
        pipeline::CALIBRATION_FILE,
        pipeline::REPORT_FILE,
        pipeline::METRICS_FILE,
        &nemenyi_file("heart"),
        "plots/heatmap_nemenyi.csv",
    ] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let matrix = fs::read_to_string(out.join(pipeline::MATRIX_FILE)).unwrap();
    assert_eq!(matrix.lines().count(), 21);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join(pipeline::CALIBRATION_FILE)).unwrap()).unwrap();
    assert_eq!(summary["n_items"], 270);
    assert!(!out.join(".lock").exists());

    // --seed overrides the config and changes the fold assignment.
    let status = bin()
        .args(["matrix", "--offline", "--seed", "8", "--out"])
        .arg(dir.path().join("other"))
        .arg("--config")
        .arg(&cfg)
        .status()
        .unwrap();
    assert!(status.success());
    let a = fs::read(out.join(pipeline::FOLDS_FILE)).unwrap();
    let b = fs::read(dir.path().join("other").join(pipeline::FOLDS_FILE)).unwrap();
    assert_ne!(a, b);
}
