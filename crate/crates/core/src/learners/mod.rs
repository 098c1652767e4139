//! Binary classifiers and random populations of them.
//!
//! Every family is implemented natively and trains deterministically from
//! the seed stored in its [`LearnerSpec`]. Iterative learners never fail to
//! converge: they stop at their iteration cap and keep the best iterate.

pub mod ensemble;
pub mod knn;
pub mod linear;
pub mod mlp;
pub mod space;
pub mod tree;

use std::collections::BTreeMap;
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{FeatureMatrix, Sample};
use crate::error::{Error, Result};
use crate::rng::{derive_indexed, derive_seed, fnv1a64, rng_from_seed};

use ensemble::{AdaBoost, GradientBoosting, VotingEnsemble};
use knn::Knn;
use linear::LinearModel;
use mlp::{Mlp, MlpParams};
use tree::{MaxFeatures, Tree, TreeParams};

pub use space::{Domain, HyperParamManifest, HyperParamSpace, ParamValue, DEFAULT_MANIFEST};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Family {
    DecisionTree,
    RandomForest,
    AdaBoost,
    GradientBoosting,
    Bagging,
    Mlp,
    Knn,
    LogisticRegression,
    LinearSvm,
    Lda,
    /// Constant majority-class baseline; not part of [`Family::ROSTER`].
    Majority,
}

impl Family {
    /// The ten built-in families in canonical order.
    pub const ROSTER: [Family; 10] = [
        Family::DecisionTree,
        Family::RandomForest,
        Family::AdaBoost,
        Family::GradientBoosting,
        Family::Bagging,
        Family::Mlp,
        Family::Knn,
        Family::LogisticRegression,
        Family::LinearSvm,
        Family::Lda,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Family::DecisionTree => "DT",
            Family::RandomForest => "RF",
            Family::AdaBoost => "ADA",
            Family::GradientBoosting => "GB",
            Family::Bagging => "BAG",
            Family::Mlp => "MLP",
            Family::Knn => "KNN",
            Family::LogisticRegression => "LR",
            Family::LinearSvm => "LSVM",
            Family::Lda => "LDA",
            Family::Majority => "MAJORITY",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ROSTER
            .into_iter()
            .chain([Family::Majority])
            .find(|f| f.id().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

impl TryFrom<String> for Family {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Family> for String {
    fn from(f: Family) -> String {
        f.id().to_string()
    }
}

/// A family plus concrete hyperparameters and the seed its training uses.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub family: Family,
    pub hyperparams: BTreeMap<String, ParamValue>,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(family: Family, seed: u64) -> Self {
        Self {
            family,
            hyperparams: BTreeMap::new(),
            seed,
        }
    }

    pub fn with(mut self, name: &str, value: ParamValue) -> Self {
        self.hyperparams.insert(name.to_string(), value);
        self
    }

    fn bad(&self, name: &str, reason: &str) -> Error {
        Error::Training {
            model: self.family.to_string(),
            reason: format!("hyperparameter {name}: {reason}"),
        }
    }

    fn int(&self, name: &str, default: i64, min: i64) -> Result<usize> {
        let v = match self.hyperparams.get(name) {
            None => default,
            Some(ParamValue::Int(v)) => *v,
            Some(_) => return Err(self.bad(name, "expected an integer")),
        };
        if v < min {
            return Err(self.bad(name, &format!("must be at least {min}")));
        }
        Ok(v as usize)
    }

    fn real(&self, name: &str, default: f64, lo: f64, hi: f64) -> Result<f64> {
        let v = match self.hyperparams.get(name) {
            None => default,
            Some(ParamValue::Real(v)) => *v,
            Some(ParamValue::Int(v)) => *v as f64,
            Some(_) => return Err(self.bad(name, "expected a number")),
        };
        if !(lo..=hi).contains(&v) {
            return Err(self.bad(name, &format!("must lie in [{lo}, {hi}]")));
        }
        Ok(v)
    }

    fn choice<'a>(&'a self, name: &str, default: &'a str) -> Result<&'a str> {
        match self.hyperparams.get(name) {
            None => Ok(default),
            Some(ParamValue::Choice(s)) => Ok(s),
            Some(_) => Err(self.bad(name, "expected a label")),
        }
    }

    fn max_features(&self) -> Result<MaxFeatures> {
        let s = self.choice("max_features", "all")?;
        MaxFeatures::parse(s).ok_or_else(|| self.bad("max_features", "unknown value"))
    }
}

impl fmt::Display for LearnerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}(", self.family)?;
        for (i, (k, v)) in self.hyperparams.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        write!(f, "; seed={})", self.seed)
    }
}

#[derive(Clone, Debug, PartialEq)]
enum State {
    Constant(u8),
    Tree(Tree),
    Voting(VotingEnsemble),
    AdaBoost(AdaBoost),
    Boosting(GradientBoosting),
    Knn(Knn),
    Linear(LinearModel),
    Mlp(Mlp),
}

/// A fitted classifier. Immutable; prediction is a pure function of it.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel {
    pub spec: LearnerSpec,
    pub n_features: usize,
    /// FNV-1a of the training instance ids, in training order.
    pub training_fingerprint: u64,
    state: State,
}

impl TrainedModel {
    pub fn predict_row(&self, row: &[f64]) -> u8 {
        match &self.state {
            State::Constant(c) => *c,
            State::Tree(t) => t.predict_row(row),
            State::Voting(e) => e.predict_row(row),
            State::AdaBoost(a) => a.predict_row(row),
            State::Boosting(g) => g.predict_row(row),
            State::Knn(k) => k.predict_row(row),
            State::Linear(l) => l.predict_row(row),
            State::Mlp(m) => m.predict_row(row),
        }
    }

    pub fn predict(&self, rows: &FeatureMatrix) -> Result<Vec<u8>> {
        self.check_dims(rows)?;
        Ok(rows.rows().map(|r| self.predict_row(r)).collect())
    }

    /// Per-row member votes for ensembles (`None` for other models). The
    /// ensemble's prediction is the documented aggregate of these votes.
    pub fn member_predictions(&self, rows: &FeatureMatrix) -> Result<Option<Vec<Vec<u8>>>> {
        self.check_dims(rows)?;
        let votes = |f: &dyn Fn(&[f64]) -> Vec<u8>| rows.rows().map(f).collect();
        Ok(match &self.state {
            State::Voting(e) => Some(votes(&|r| e.member_votes(r))),
            State::AdaBoost(a) => Some(votes(&|r| a.member_votes(r))),
            _ => None,
        })
    }

    pub fn is_constant(&self) -> bool {
        matches!(self.state, State::Constant(_))
    }

    fn check_dims(&self, rows: &FeatureMatrix) -> Result<()> {
        if rows.n_cols() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                got: rows.n_cols(),
            });
        }
        Ok(())
    }
}

fn fingerprint(sample: &Sample) -> u64 {
    let bytes: Vec<u8> = sample.ids.iter().flat_map(|id| id.0.to_le_bytes()).collect();
    fnv1a64(&bytes)
}

fn majority(labels: &[u8]) -> u8 {
    let pos = labels.iter().filter(|&&l| l == 1).count();
    u8::from(2 * pos > labels.len())
}

/// Fits `spec` on `sample`. A single-class training set yields a model that
/// predicts that class.
pub fn train(spec: &LearnerSpec, sample: &Sample) -> Result<TrainedModel> {
    let x = &sample.rows;
    let y = &sample.labels;
    if x.n_rows() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.n_rows(),
            got: y.len(),
        });
    }
    if y.len() < 2 {
        return Err(Error::Training {
            model: spec.to_string(),
            reason: format!("{} training instances, at least 2 required", y.len()),
        });
    }
    let pos = y.iter().filter(|&&l| l == 1).count();
    let single_class = pos == 0 || pos == y.len();
    let state = if single_class || spec.family == Family::Majority {
        State::Constant(majority(y))
    } else {
        fit_state(spec, x, y)?
    };
    Ok(TrainedModel {
        spec: spec.clone(),
        n_features: x.n_cols(),
        training_fingerprint: fingerprint(sample),
        state,
    })
}

fn fit_state(spec: &LearnerSpec, x: &FeatureMatrix, y: &[u8]) -> Result<State> {
    let seed = spec.seed;
    let all: Vec<usize> = (0..y.len()).collect();
    Ok(match spec.family {
        Family::Majority => State::Constant(majority(y)),
        Family::DecisionTree => {
            let params = TreeParams {
                max_depth: spec.int("max_depth", i64::MAX, 0)?,
                min_samples_split: spec.int("min_samples_split", 2, 2)?,
                min_samples_leaf: spec.int("min_samples_leaf", 1, 1)?,
                max_features: spec.max_features()?,
            };
            let weights = vec![1.0; y.len()];
            State::Tree(Tree::fit(x, y, &weights, &all, &params, &mut rng_from_seed(seed)))
        }
        Family::RandomForest => State::Voting(ensemble::random_forest(
            x,
            y,
            spec.int("n_estimators", 100, 1)?,
            spec.int("max_depth", i64::MAX, 1)?,
            spec.int("min_samples_leaf", 1, 1)?,
            spec.max_features()?,
            seed,
        )),
        Family::Bagging => State::Voting(ensemble::bagging(
            x,
            y,
            spec.int("n_estimators", 10, 1)?,
            spec.real("max_samples", 1.0, 1e-9, 1.0)?,
            spec.int("max_depth", i64::MAX, 1)?,
            seed,
        )),
        Family::AdaBoost => State::AdaBoost(AdaBoost::fit(
            x,
            y,
            spec.int("n_estimators", 50, 1)?,
            spec.real("learning_rate", 1.0, 1e-12, f64::MAX)?,
        )),
        Family::GradientBoosting => State::Boosting(GradientBoosting::fit(
            x,
            y,
            spec.int("n_estimators", 100, 1)?,
            spec.real("learning_rate", 0.1, 0.0, f64::MAX)?,
            spec.real("subsample", 1.0, 1e-9, 1.0)?,
            seed,
        )),
        Family::Knn => {
            let standardize = match spec.choice("scaling", "none")? {
                "none" => false,
                "standard" => true,
                _ => return Err(spec.bad("scaling", "expected none or standard")),
            };
            State::Knn(Knn::fit(x, y, spec.int("k", 5, 1)?, standardize))
        }
        Family::Lda => match linear::lda(x, y, spec.real("shrinkage", 0.0, 0.0, 1.0)?) {
            Some(m) => State::Linear(m),
            None => State::Constant(majority(y)),
        },
        Family::LogisticRegression => State::Linear(linear::logistic_regression(
            x,
            y,
            spec.real("learning_rate", 0.1, 1e-12, f64::MAX)?,
            spec.real("l2", 1e-4, 0.0, f64::MAX)?,
            spec.int("max_iter", 100, 0)?,
        )),
        Family::LinearSvm => State::Linear(linear::linear_svm(
            x,
            y,
            spec.real("lambda", 1e-2, 1e-12, f64::MAX)?,
            spec.int("epochs", 10, 0)?,
            seed,
        )),
        Family::Mlp => {
            let params = MlpParams {
                hidden_units: spec.int("hidden_units", 16, 1)?,
                learning_rate: spec.real("learning_rate", 0.1, 1e-12, f64::MAX)?,
                epochs: spec.int("epochs", 50, 0)?,
                batch_size: spec.int("batch_size", 32, 1)?,
                alpha: spec.real("alpha", 1e-4, 0.0, f64::MAX)?,
            };
            State::Mlp(Mlp::fit(x, y, &params, seed))
        }
    })
}

/// Draws `count` specs spread evenly over `families` (the first
/// `count % families.len()` families in canonical order receive one extra).
/// Specs come out grouped by family in canonical order.
pub fn sample_random_models(
    count: usize,
    families: &[Family],
    seed: u64,
    manifest: &HyperParamManifest,
) -> Result<Vec<LearnerSpec>> {
    let mut ordered: Vec<Family> = families.to_vec();
    ordered.sort();
    ordered.dedup();
    if ordered.is_empty() {
        return Err(Error::Precondition("no learner families given".into()));
    }
    if count < ordered.len() {
        return Err(Error::Precondition(format!(
            "{count} models cannot cover {} families",
            ordered.len()
        )));
    }
    let base = count / ordered.len();
    let extra = count % ordered.len();
    let mut specs = Vec::with_capacity(count);
    for (fi, &family) in ordered.iter().enumerate() {
        let space = manifest.space(family)?;
        let n = base + usize::from(fi < extra);
        for _ in 0..n {
            let s = derive_indexed(seed, "model", specs.len() as u64);
            let mut rng = rng_from_seed(derive_seed(s, "params"));
            specs.push(LearnerSpec {
                family,
                hyperparams: space.sample(&mut rng),
                seed: derive_seed(s, "train"),
            });
        }
    }
    Ok(specs)
}

/// Writes one JSON object per line.
pub fn write_spec_list(specs: &[LearnerSpec], mut sink: impl Write) -> Result<()> {
    for spec in specs {
        serde_json::to_writer(&mut sink, spec)?;
        sink.write_all(b"\n")?;
    }
    Ok(())
}

/// Reads a spec list written by [`write_spec_list`]; blank lines are skipped.
pub fn read_spec_list(source: impl BufRead) -> Result<Vec<LearnerSpec>> {
    let mut specs = Vec::new();
    for (i, line) in source.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let spec: LearnerSpec =
            serde_json::from_str(&line).map_err(|e| Error::parse(i + 1, e.to_string()))?;
        specs.push(spec);
    }
    Ok(specs)
}
