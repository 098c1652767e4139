//! The four stages. Stages couple only through files in the output
//! directory:
//!
//! | file | stage | content |
//! |---|---|---|
//! | `folds.csv` | matrix | `instance_id,fold` |
//! | `models.jsonl` | matrix | one learner spec per line |
//! | `matrix.csv` | matrix | `model_id,<instance ids>`, 0/1 cells |
//! | `model_means.csv` | matrix | `model_id,accuracy` (row means) |
//! | `item_means.csv` | matrix | `instance_id,proportion_correct` (column means) |
//! | `items.csv` | calibrate | `item_id,discrimination,difficulty,guessing,flag` |
//! | `calibration.json` | calibrate | parameter means, flag counts, per-fold convergence |
//! | `plans/<strategy>.csv` | evaluate | `instance_id,assignment` |
//! | `report.json` | evaluate | full evaluation report |
//! | `metrics.csv` | evaluate | `strategy,family,split,accuracy,precision,recall,f1,mcc` |
//! | `nemenyi_<name>.csv` | evaluate | pairwise Nemenyi p-values (when tests ran) |
//! | `plots/*.csv` | plotdata | see [`crate::plots`] |
//!
//! `manifest.json` records digests, timings and warnings; it is the only file
//! that differs between two runs of the same configuration.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use irt_partition::dataset::{
    parse_arff, parse_csv, stratified_folds, ArffOptions, Dataset, InstanceId, OpenMlClient, PositiveClass,
};
use irt_partition::evaluation::{evaluate_dataset, write_metrics_csv, EvaluationReport};
use irt_partition::irt::{calibrate_by_fold, read_item_parameters, write_item_parameters, ItemParameters};
use irt_partition::learners::{sample_random_models, write_spec_list, Family, HyperParamManifest, DEFAULT_MANIFEST};
use irt_partition::partition::{build_plan, write_plan, PartitionPlan};
use irt_partition::response::{build_response_matrix, export_matrix, import_matrix, ResponseMatrix};
use irt_partition::stats::write_nemenyi_csv;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::manifest::{unix_now, write_atomic, RunLock, RunManifest, StageTiming};
use crate::plots;

pub const FOLDS_FILE: &str = "folds.csv";
pub const MODELS_FILE: &str = "models.jsonl";
pub const MATRIX_FILE: &str = "matrix.csv";
pub const ITEMS_FILE: &str = "items.csv";
pub const CALIBRATION_FILE: &str = "calibration.json";
pub const PLANS_DIR: &str = "plans";
pub const REPORT_FILE: &str = "report.json";
pub const METRICS_FILE: &str = "metrics.csv";
pub const MODEL_MEANS_FILE: &str = "model_means.csv";
pub const ITEM_MEANS_FILE: &str = "item_means.csv";

/// Pairwise Nemenyi p-values of the named dataset.
pub fn nemenyi_file(name: &str) -> String {
    format!("nemenyi_{name}.csv")
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParameterMeans {
    pub discrimination: f64,
    pub difficulty: f64,
    pub guessing: f64,
}

impl ParameterMeans {
    fn of<'a>(items: impl Iterator<Item = &'a ItemParameters>) -> Option<Self> {
        let (mut n, mut s) = (0usize, [0.0; 3]);
        for p in items {
            n += 1;
            s[0] += p.discrimination;
            s[1] += p.difficulty;
            s[2] += p.guessing;
        }
        (n > 0).then(|| Self {
            discrimination: s[0] / n as f64,
            difficulty: s[1] / n as f64,
            guessing: s[2] / n as f64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub n_items: usize,
    pub converged: bool,
    pub iterations: usize,
    pub final_loglik: f64,
    pub warnings: Vec<String>,
}

/// Contents of `calibration.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSummary {
    pub dataset: String,
    pub n_models: usize,
    pub n_items: usize,
    /// Over every item, degenerate ones included at their imputed values.
    pub means: ParameterMeans,
    /// Over items whose responses were not all equal.
    pub means_non_degenerate: Option<ParameterMeans>,
    pub flag_counts: BTreeMap<String, usize>,
    pub folds: Vec<FoldSummary>,
}

/// An output directory owned by this process for the duration of a command.
pub struct Pipeline {
    config: RunConfig,
    out: PathBuf,
    offline: bool,
    manifest: RunManifest,
    dataset: Option<Dataset>,
    _lock: RunLock,
}

fn to_bytes(f: impl FnOnce(&mut Vec<u8>) -> irt_partition::Result<()>, stage: &'static str) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(CliError::stage(stage))?;
    Ok(buf)
}

fn json_bytes(value: &impl Serialize) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

impl Pipeline {
    pub fn open(config: RunConfig, offline: bool) -> CliResult<Self> {
        config.validate()?;
        let out = config.out.clone();
        let lock = RunLock::acquire(&out)?;
        let hash = config.hash();
        let mut manifest = match RunManifest::load(&out)? {
            Some(m) if m.config_hash == hash => m,
            Some(_) => {
                log::warn!(
                    "{} holds a manifest for a different configuration; starting a new one",
                    out.display()
                );
                RunManifest::default()
            }
            None => RunManifest::default(),
        };
        manifest.config_hash = hash;
        manifest.config = serde_json::to_value(&config).expect("config serializes");
        manifest.versions = BTreeMap::from([
            ("irt-partition".to_string(), irt_partition::VERSION.to_string()),
            ("irt-partition-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        Ok(Self {
            config,
            out,
            offline,
            manifest,
            dataset: None,
            _lock: lock,
        })
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn manifest(&self) -> &RunManifest {
        &self.manifest
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    fn path(&self, relative: &str) -> PathBuf {
        self.out.join(relative)
    }

    fn write(&mut self, name: &str, relative: &str, bytes: &[u8]) -> CliResult<()> {
        let path = self.path(relative);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(CliError::io(parent))?;
        }
        write_atomic(&path, bytes)?;
        self.manifest.record(&self.out, name, relative)
    }

    fn read(&self, relative: &str, producer: &'static str) -> CliResult<Vec<u8>> {
        let path = self.path(relative);
        if !path.is_file() {
            return Err(CliError::MissingArtifact(path, producer));
        }
        fs::read(&path).map_err(CliError::io(path))
    }

    fn finish_stage(&mut self, stage: &str, started: Instant) -> CliResult<()> {
        self.manifest.timings.insert(
            stage.to_string(),
            StageTiming {
                seconds: started.elapsed().as_secs_f64(),
                finished_at: unix_now(),
            },
        );
        self.manifest.save(&self.out)
    }

    /// Loads the configured dataset once per command.
    pub fn dataset(&mut self) -> CliResult<&Dataset> {
        if self.dataset.is_none() {
            let ds = load_dataset(&self.config, self.offline)?;
            log::info!(
                "dataset {}: {} instances, {} features",
                self.config.name,
                ds.len(),
                ds.n_features()
            );
            self.dataset = Some(ds);
        }
        Ok(self.dataset.as_ref().expect("just loaded"))
    }

    /// Folds, learner zoo and response matrix.
    pub fn matrix(&mut self) -> CliResult<ResponseMatrix> {
        let started = Instant::now();
        let stage = "matrix";
        let config = self.config.clone();
        let hp = hyperparameters()?;
        let ds = self.dataset()?.clone();
        let folds = stratified_folds(&ds, config.folds, config.fold_seed()).map_err(CliError::Dataset)?;
        let specs = sample_random_models(config.models, &Family::ROSTER, config.model_seed(), &hp)
            .map_err(CliError::stage(stage))?;
        log::info!(
            "training {} models on {} folds ({} fits)",
            specs.len(),
            config.folds,
            specs.len() * config.folds.max(1)
        );
        let matrix = build_response_matrix(&ds, &folds, &specs).map_err(CliError::stage(stage))?;

        let mut folds_csv = String::from("instance_id,fold\n");
        for (id, f) in matrix.item_ids.iter().zip(&matrix.fold_of_item) {
            folds_csv.push_str(&format!("{id},{f}\n"));
        }
        self.write("folds", FOLDS_FILE, folds_csv.as_bytes())?;
        let models = to_bytes(|b| write_spec_list(&specs, b), stage)?;
        self.write("models", MODELS_FILE, &models)?;
        let bytes = to_bytes(|b| export_matrix(&matrix, b), stage)?;
        self.write("matrix", MATRIX_FILE, &bytes)?;

        let mut model_means = String::from("model_id,accuracy\n");
        for (id, m) in matrix.model_ids.iter().zip(matrix.model_means()) {
            model_means.push_str(&format!("{id},{m}\n"));
        }
        self.write("model_means", MODEL_MEANS_FILE, model_means.as_bytes())?;
        let item_means = matrix.item_means();
        let mut items_csv = String::from("instance_id,proportion_correct\n");
        for (id, m) in matrix.item_ids.iter().zip(&item_means) {
            items_csv.push_str(&format!("{id},{m}\n"));
        }
        self.write("item_means", ITEM_MEANS_FILE, items_csv.as_bytes())?;
        let all_right = item_means.iter().filter(|&&m| m == 1.0).count();
        let all_wrong = item_means.iter().filter(|&&m| m == 0.0).count();
        if all_right + all_wrong > 0 {
            log::info!("{all_right} instances answered correctly by every model, {all_wrong} by none");
        }
        self.finish_stage(stage, started)?;
        Ok(matrix)
    }

    fn load_matrix(&self) -> CliResult<ResponseMatrix> {
        let mut matrix = import_matrix(&self.read(MATRIX_FILE, "matrix")?[..]).map_err(CliError::stage("calibrate"))?;
        let folds = read_folds(&self.read(FOLDS_FILE, "matrix")?)?;
        matrix.fold_of_item = matrix
            .item_ids
            .iter()
            .map(|id| {
                folds.get(id).copied().ok_or_else(|| CliError::Stage {
                    stage: "calibrate",
                    source: irt_partition::Error::InvalidData(format!("{FOLDS_FILE} has no fold for instance {id}")),
                })
            })
            .collect::<CliResult<_>>()?;
        Ok(matrix)
    }

    /// Per-fold 3PL calibration; builds the matrix first if it is missing.
    pub fn calibrate(&mut self) -> CliResult<CalibrationSummary> {
        if !self.path(MATRIX_FILE).is_file() || !self.path(FOLDS_FILE).is_file() {
            self.matrix()?;
        }
        let started = Instant::now();
        let stage = "calibrate";
        let matrix = self.load_matrix()?;
        let fc = calibrate_by_fold(&matrix, &self.config.calibration).map_err(CliError::stage(stage))?;

        let mut flag_counts = BTreeMap::new();
        for p in &fc.items {
            *flag_counts.entry(p.flag.to_string()).or_insert(0) += 1;
        }
        let mut folds = Vec::new();
        for (fold, result) in &fc.folds {
            for w in &result.warnings {
                self.manifest.warn(format!("calibration fold {fold}: {w}"));
            }
            folds.push(FoldSummary {
                fold: *fold,
                n_items: result.items.len(),
                converged: result.converged,
                iterations: result.iterations,
                final_loglik: result.loglik_trace.last().copied().unwrap_or(f64::NAN),
                warnings: result.warnings.clone(),
            });
        }
        let summary = CalibrationSummary {
            dataset: self.config.name.clone(),
            n_models: matrix.n_models(),
            n_items: matrix.n_items(),
            means: ParameterMeans::of(fc.items.iter()).unwrap_or_default(),
            means_non_degenerate: ParameterMeans::of(fc.items.iter().filter(|p| !p.flag.is_degenerate())),
            flag_counts,
            folds,
        };
        log::info!(
            "mean parameters: a={:.3} b={:.3} c={:.3}",
            summary.means.discrimination,
            summary.means.difficulty,
            summary.means.guessing
        );
        let items = to_bytes(|b| write_item_parameters(&fc.items, b), stage)?;
        self.write("items", ITEMS_FILE, &items)?;
        self.write("calibration", CALIBRATION_FILE, &json_bytes(&summary))?;
        self.finish_stage(stage, started)?;
        Ok(summary)
    }

    /// Plans for every configured strategy, tuned evaluation, statistics.
    /// Calibrates first if `items.csv` is missing.
    pub fn evaluate(&mut self) -> CliResult<EvaluationReport> {
        if !self.path(ITEMS_FILE).is_file() {
            self.calibrate()?;
        }
        let started = Instant::now();
        let stage = "evaluate";
        let items = read_item_parameters(&self.read(ITEMS_FILE, "calibrate")?[..]).map_err(CliError::stage(stage))?;
        let config = self.config.clone();
        let hp = hyperparameters()?;
        let ds = self.dataset()?.clone();

        let plans: Vec<PartitionPlan> = config
            .strategies()
            .into_iter()
            .map(|s| build_plan(s, &ds.instance_ids, &ds.labels, &items, config.train_ratio))
            .collect::<irt_partition::Result<_>>()
            .map_err(CliError::stage(stage))?;
        for plan in &plans {
            let bytes = to_bytes(|b| write_plan(plan, b), stage)?;
            let name = format!("plan:{}", plan.strategy);
            self.write(&name, &format!("{PLANS_DIR}/{}.csv", plan.strategy), &bytes)?;
        }

        let report = evaluate_dataset(&config.name, &ds, &plans, &config.families(), &config.tuning_config(), &hp)
            .map_err(CliError::stage(stage))?;
        for e in &report.entries {
            if let Some(f) = &e.failure {
                self.manifest.warn(format!("{} / {}: {f}", e.strategy, e.family));
            }
        }
        if let Some(why) = &report.tests_skipped {
            self.manifest.warn(format!("statistical tests skipped: {why}"));
        }
        let json = to_bytes(|b| report.write_json(&mut *b).map(|_| b.push(b'\n')), stage)?;
        self.write("report", REPORT_FILE, &json)?;
        let metrics = to_bytes(|b| write_metrics_csv(&report, b), stage)?;
        self.write("metrics", METRICS_FILE, &metrics)?;
        if let Some(t) = report.tests.as_ref().filter(|t| !t.nemenyi_p.is_empty()) {
            let bytes = to_bytes(|b| write_nemenyi_csv(&t.treatments, &t.nemenyi_p, b), stage)?;
            self.write("nemenyi", &nemenyi_file(&config.name), &bytes)?;
        }
        self.finish_stage(stage, started)?;
        Ok(report)
    }

    pub fn load_report(&self) -> CliResult<EvaluationReport> {
        let bytes = self.read(REPORT_FILE, "evaluate")?;
        serde_json::from_slice(&bytes).map_err(|e| CliError::stage("plotdata")(e.into()))
    }

    /// Plot-ready CSVs from an existing report.
    pub fn plotdata(&mut self) -> CliResult<Vec<PathBuf>> {
        let started = Instant::now();
        let report = self.load_report()?;
        let mut written = Vec::new();
        for (file, bytes) in plots::render(&report) {
            let relative = format!("{}/{file}", plots::PLOTS_DIR);
            self.write(&format!("plot:{file}"), &relative, &bytes)?;
            written.push(self.path(&relative));
        }
        if report.tests.as_ref().map_or(true, |t| t.nemenyi_p.is_empty()) {
            self.manifest
                .warn(format!("{} not written: no Nemenyi results in the report", plots::HEATMAP_FILE));
        }
        self.finish_stage("plotdata", started)?;
        Ok(written)
    }

    /// All four stages from scratch.
    pub fn run_all(&mut self) -> CliResult<()> {
        self.matrix()?;
        self.calibrate()?;
        self.evaluate()?;
        self.plotdata()?;
        Ok(())
    }
}

fn hyperparameters() -> CliResult<HyperParamManifest> {
    HyperParamManifest::parse(DEFAULT_MANIFEST).map_err(CliError::stage("setup"))
}

fn read_folds(bytes: &[u8]) -> CliResult<HashMap<InstanceId, usize>> {
    let bad = |line: usize, msg: &str| CliError::Stage {
        stage: "calibrate",
        source: irt_partition::Error::Parse {
            line,
            message: format!("{FOLDS_FILE}: {msg}"),
        },
    };
    let mut r = csv::Reader::from_reader(bytes);
    let header = r.headers().map_err(|_| bad(1, "unreadable header"))?;
    if header.iter().map(str::trim).ne(["instance_id", "fold"]) {
        return Err(bad(1, "header must be instance_id,fold"));
    }
    let mut out = HashMap::new();
    for (k, rec) in r.records().enumerate() {
        let line = k + 2;
        let rec = rec.map_err(|_| bad(line, "malformed row"))?;
        if rec.len() != 2 {
            return Err(bad(line, "expected 2 fields"));
        }
        let id = rec[0].trim().parse().map_err(|_| bad(line, "bad instance id"))?;
        let fold = rec[1].trim().parse().map_err(|_| bad(line, "bad fold"))?;
        out.insert(id, fold);
    }
    Ok(out)
}

/// Reads the dataset named by the configuration and checks it is usable.
pub fn load_dataset(config: &RunConfig, offline: bool) -> CliResult<Dataset> {
    let src = &config.dataset;
    let positive = src
        .positive
        .clone()
        .map_or(PositiveClass::Minority, PositiveClass::Label);
    let ds = if let Some(id) = src.openml_id {
        let client = OpenMlClient {
            offline,
            ..OpenMlClient::default()
        };
        client.fetch(id, &config.cache_dir(), &positive)
    } else {
        let path = src.path.as_ref().expect("validated: path or openml_id");
        let bytes = fs::read(path).map_err(CliError::io(path))?;
        let is_arff = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("arff"));
        if is_arff {
            parse_arff(
                &bytes,
                &ArffOptions {
                    target: src.target.clone(),
                    positive,
                },
            )
        } else {
            let target = src
                .target
                .as_deref()
                .ok_or_else(|| CliError::Config("dataset.target is required for CSV input".into()))?;
            parse_csv(&bytes, target, &positive)
        }
    }
    .map_err(CliError::Dataset)?;
    ds.validate_for_pipeline().map_err(CliError::Dataset)?;
    Ok(ds)
}
