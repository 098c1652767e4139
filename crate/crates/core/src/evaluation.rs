//! Per-partition tuning and scoring of every learner family.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{stratified_label_folds, Dataset, Sample};
use crate::error::{Error, Result};
use crate::learners::{train, Family, HyperParamManifest, LearnerSpec};
use crate::partition::{PartitionPlan, PartitionStrategy};
use crate::rng::{derive_indexed, derive_seed, rng_from_seed};
use crate::stats::{run_tests, ScoreTable, TestResult};

/// Confusion counts and the derived scores, positive class = 1. Any ratio
/// with a zero denominator is reported as 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSet {
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

impl MetricSet {
    pub fn from_confusion(tp: usize, fp: usize, fn_: usize, tn: usize) -> Self {
        let (tpf, fpf, fnf, tnf) = (tp as f64, fp as f64, fn_ as f64, tn as f64);
        let precision = ratio(tpf, tpf + fpf);
        let recall = ratio(tpf, tpf + fnf);
        let den = ((tpf + fpf) * (tpf + fnf) * (tnf + fpf) * (tnf + fnf)).sqrt();
        Self {
            accuracy: ratio(tpf + tnf, tpf + fpf + fnf + tnf),
            precision,
            recall,
            f1: ratio(2.0 * precision * recall, precision + recall),
            mcc: ratio(tpf * tnf - fpf * fnf, den).clamp(-1.0, 1.0),
            tp,
            fp,
            fn_,
            tn,
        }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Accuracy => self.accuracy,
            Metric::Precision => self.precision,
            Metric::Recall => self.recall,
            Metric::F1 => self.f1,
            Metric::Mcc => self.mcc,
        }
    }
}

pub fn compute_metrics(y_true: &[u8], y_pred: &[u8]) -> Result<MetricSet> {
    if y_true.len() != y_pred.len() {
        return Err(Error::DimensionMismatch {
            expected: y_true.len(),
            got: y_pred.len(),
        });
    }
    if y_true.is_empty() {
        return Err(Error::Precondition("metrics of an empty prediction set".into()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => tp += 1,
            (0, 1) => fp += 1,
            (1, 0) => fn_ += 1,
            _ => tn += 1,
        }
    }
    Ok(MetricSet::from_confusion(tp, fp, fn_, tn))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
    Mcc,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningConfig {
    pub samples_per_family: usize,
    pub inner_folds: usize,
    pub selection_metric: Metric,
    pub seed: u64,
}

impl Default for TuningConfig {
    fn default() -> Self {
        Self {
            samples_per_family: 30,
            inner_folds: 5,
            selection_metric: Metric::Accuracy,
            seed: 0,
        }
    }
}

impl TuningConfig {
    pub fn validate(&self) -> Result<()> {
        if self.samples_per_family < 1 {
            return Err(Error::Precondition("samples_per_family must be at least 1".into()));
        }
        if self.inner_folds < 2 {
            return Err(Error::Precondition("inner_folds must be at least 2".into()));
        }
        Ok(())
    }
}

/// The candidate specs a search over `family` considers. They depend only on
/// the tuning seed and the family, so every partition is offered the same
/// candidates.
pub fn search_candidates(
    family: Family,
    config: &TuningConfig,
    manifest: &HyperParamManifest,
) -> Result<Vec<LearnerSpec>> {
    let space = manifest.space(family)?;
    let root = derive_seed(config.seed, &format!("search/{family}"));
    Ok((0..config.samples_per_family)
        .map(|j| {
            let s = derive_indexed(root, "candidate", j as u64);
            LearnerSpec {
                family,
                hyperparams: space.sample(&mut rng_from_seed(derive_seed(s, "params"))),
                seed: derive_seed(s, "train"),
            }
        })
        .collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchOutcome {
    pub spec: LearnerSpec,
    /// Position of the winner among the candidates.
    pub index: usize,
    /// Mean inner-fold selection score of the winner.
    pub score: f64,
}

/// Scores each candidate by its mean selection metric over stratified inner
/// folds of `train_set` and returns the best, earliest candidate winning
/// ties. Only `train_set` is read.
pub fn select_best(candidates: &[LearnerSpec], train_set: &Sample, config: &TuningConfig) -> Result<SearchOutcome> {
    config.validate()?;
    if candidates.is_empty() {
        return Err(Error::Precondition("no candidates to search".into()));
    }
    let pos = train_set.positives();
    let smallest = pos.min(train_set.len() - pos);
    if smallest == 0 {
        return Err(Error::Precondition("tuning needs both classes in the training set".into()));
    }
    let k = config.inner_folds.min(smallest).max(2);
    if smallest < 2 {
        return Err(Error::Precondition(
            "tuning needs at least 2 training instances of each class".into(),
        ));
    }
    let folds = stratified_label_folds(&train_set.labels, k, derive_seed(config.seed, "search/inner-folds"))?;
    let splits: Vec<(Sample, Sample)> = (0..k)
        .map(|f| (train_set.subset(&folds.complement(f)), train_set.subset(&folds.members(f))))
        .collect();
    let mut best: Option<SearchOutcome> = None;
    for (index, spec) in candidates.iter().enumerate() {
        let mut total = 0.0;
        for (fit_on, held_out) in &splits {
            let model = train(spec, fit_on)?;
            let pred = model.predict(&held_out.rows)?;
            total += compute_metrics(&held_out.labels, &pred)?.get(config.selection_metric);
        }
        let score = total / k as f64;
        if best.as_ref().map_or(true, |b| score > b.score) {
            best = Some(SearchOutcome {
                spec: spec.clone(),
                index,
                score,
            });
        }
    }
    Ok(best.expect("at least one candidate"))
}

/// Random search over `family`'s declared hyperparameter space.
pub fn random_grid_search(
    family: Family,
    train_set: &Sample,
    config: &TuningConfig,
    manifest: &HyperParamManifest,
) -> Result<SearchOutcome> {
    select_best(&search_candidates(family, config, manifest)?, train_set, config)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub strategy: PartitionStrategy,
    pub family: Family,
    pub spec: Option<LearnerSpec>,
    pub search_score: Option<f64>,
    pub train: Option<MetricSet>,
    pub test: Option<MetricSet>,
    /// Why the family produced no model on this partition.
    pub failure: Option<String>,
}

fn evaluate_family(
    family: Family,
    train_set: &Sample,
    test_set: &Sample,
    config: &TuningConfig,
    manifest: &HyperParamManifest,
) -> Result<(SearchOutcome, MetricSet, MetricSet)> {
    let outcome = random_grid_search(family, train_set, config, manifest)?;
    let model = train(&outcome.spec, train_set)?;
    let train_metrics = compute_metrics(&train_set.labels, &model.predict(&train_set.rows)?)?;
    let test_metrics = compute_metrics(&test_set.labels, &model.predict(&test_set.rows)?)?;
    Ok((outcome, train_metrics, test_metrics))
}

/// Tunes, refits and scores each family on one plan. A family that fails is
/// recorded with its reason instead of aborting the others.
pub fn evaluate_partition(
    dataset: &Dataset,
    plan: &PartitionPlan,
    families: &[Family],
    config: &TuningConfig,
    manifest: &HyperParamManifest,
) -> Result<Vec<ReportEntry>> {
    config.validate()?;
    if plan.provenance.len() != dataset.len()
        || plan
            .provenance
            .iter()
            .zip(&dataset.instance_ids)
            .any(|(p, id)| p.instance_id != *id)
    {
        return Err(Error::InvalidData(format!(
            "plan {} does not cover the dataset in order",
            plan.strategy
        )));
    }
    let (train_idx, test_idx) = plan.indices();
    let train_set = dataset.sample(&train_idx);
    let test_set = dataset.sample(&test_idx);
    Ok(families
        .par_iter()
        .map(|&family| match evaluate_family(family, &train_set, &test_set, config, manifest) {
            Ok((outcome, train, test)) => ReportEntry {
                strategy: plan.strategy,
                family,
                search_score: Some(outcome.score),
                spec: Some(outcome.spec),
                train: Some(train),
                test: Some(test),
                failure: None,
            },
            Err(e) => ReportEntry {
                strategy: plan.strategy,
                family,
                spec: None,
                search_score: None,
                train: None,
                test: None,
                failure: Some(e.to_string()),
            },
        })
        .collect())
}

/// Everything measured on one dataset. Contains no wall-clock data so that
/// equal inputs give byte-identical reports.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub dataset: String,
    pub n_instances: usize,
    pub seed: u64,
    pub tuning: TuningConfig,
    pub manifest_version: u32,
    pub strategies: Vec<PartitionStrategy>,
    pub families: Vec<Family>,
    pub entries: Vec<ReportEntry>,
    /// Friedman/Nemenyi over test F1 (families as blocks).
    pub tests: Option<TestResult>,
    /// Why `tests` is absent, if it is.
    pub tests_skipped: Option<String>,
}

impl EvaluationReport {
    pub fn entry(&self, strategy: PartitionStrategy, family: Family) -> Option<&ReportEntry> {
        self.entries
            .iter()
            .find(|e| e.strategy == strategy && e.family == family)
    }

    /// Mean over families of a test metric, per strategy (failed entries
    /// skipped).
    pub fn mean_test_metric(&self, strategy: PartitionStrategy, metric: Metric) -> Option<f64> {
        let vals: Vec<f64> = self
            .entries
            .iter()
            .filter(|e| e.strategy == strategy)
            .filter_map(|e| e.test.map(|m| m.get(metric)))
            .collect();
        (!vals.is_empty()).then(|| vals.iter().sum::<f64>() / vals.len() as f64)
    }

    /// Families x strategies table of a test metric; families with any
    /// failed entry are left out.
    pub fn score_table(&self, metric: Metric) -> Result<ScoreTable> {
        let mut blocks = Vec::new();
        let mut scores = Vec::new();
        for &family in &self.families {
            let row: Option<Vec<f64>> = self
                .strategies
                .iter()
                .map(|&s| self.entry(s, family).and_then(|e| e.test).map(|m| m.get(metric)))
                .collect();
            if let Some(row) = row {
                blocks.push(family.to_string());
                scores.push(row);
            }
        }
        ScoreTable::new(blocks, self.strategies.iter().map(|s| s.to_string()).collect(), scores)
    }

    /// Fills `tests` from the test-F1 table.
    pub fn attach_tests(&mut self) {
        match self.score_table(Metric::F1).and_then(|t| run_tests(&t, "test_f1")) {
            Ok(t) => {
                self.tests = Some(t);
                self.tests_skipped = None;
            }
            Err(e) => {
                self.tests = None;
                self.tests_skipped = Some(e.to_string());
            }
        }
    }

    pub fn write_json(&self, sink: impl Write) -> Result<()> {
        serde_json::to_writer_pretty(sink, self)?;
        Ok(())
    }
}

/// Evaluates every plan and assembles the report in (strategy, family) order.
pub fn evaluate_dataset(
    name: &str,
    dataset: &Dataset,
    plans: &[PartitionPlan],
    families: &[Family],
    config: &TuningConfig,
    manifest: &HyperParamManifest,
) -> Result<EvaluationReport> {
    let per_plan: Vec<Result<Vec<ReportEntry>>> = plans
        .par_iter()
        .map(|plan| evaluate_partition(dataset, plan, families, config, manifest))
        .collect();
    let mut entries = Vec::with_capacity(plans.len() * families.len());
    for r in per_plan {
        entries.extend(r?);
    }
    let mut report = EvaluationReport {
        dataset: name.to_string(),
        n_instances: dataset.len(),
        seed: config.seed,
        tuning: config.clone(),
        manifest_version: manifest.version,
        strategies: plans.iter().map(|p| p.strategy).collect(),
        families: families.to_vec(),
        entries,
        tests: None,
        tests_skipped: None,
    };
    report.attach_tests();
    Ok(report)
}

/// Flat CSV `strategy,family,split,accuracy,precision,recall,f1,mcc`; failed
/// entries are omitted.
pub fn write_metrics_csv(report: &EvaluationReport, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["strategy", "family", "split", "accuracy", "precision", "recall", "f1", "mcc"])?;
    for e in &report.entries {
        for (split, m) in [("train", e.train), ("test", e.test)] {
            if let Some(m) = m {
                w.write_record([
                    e.strategy.to_string(),
                    e.family.to_string(),
                    split.to_string(),
                    m.accuracy.to_string(),
                    m.precision.to_string(),
                    m.recall.to_string(),
                    m.f1.to_string(),
                    m.mcc.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
