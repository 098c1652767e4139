//! Run configuration, read from a TOML file.
//!
//! ```toml
//! name = "diabetes"          # dataset label used in reports
//! seed = 0                   # root seed; every stochastic stage derives from it
//! out = "runs/diabetes"      # output directory (relative to this file)
//! folds = 10                 # K for the response matrix; 1 = train and test on everything
//! models = 100               # size of the random learner zoo
//! train_ratio = 0.7
//! # strategies = ["Gues_max_min", "Random_0"]   # default: all twelve
//! # families = ["DT", "KNN"]                     # default: the ten-family roster
//!
//! [dataset]
//! openml_id = 37             # or: path = "data.csv" / "data.arff"
//! # target = "Class"         # required for CSV; ARFF defaults to the last nominal attribute
//! # positive = "tested_positive"   # default: minority class
//! # cache_dir = "openml-cache"     # overridden by $IRT_PARTITION_CACHE
//!
//! [calibration]              # any CalibrationConfig field
//! quadrature_points = 21
//!
//! [tuning]
//! samples_per_family = 30
//! inner_folds = 5
//! selection_metric = "accuracy"
//! ```

use std::path::{Path, PathBuf};

use irt_partition::evaluation::{Metric, TuningConfig};
use irt_partition::irt::CalibrationConfig;
use irt_partition::learners::Family;
use irt_partition::partition::{enumerate_strategies, PartitionStrategy};
use irt_partition::rng::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// Environment variable overriding the OpenML cache directory.
pub const CACHE_ENV: &str = "IRT_PARTITION_CACHE";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default = "default_models")]
    pub models: usize,
    #[serde(default = "default_ratio")]
    pub train_ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strategies: Option<Vec<PartitionStrategy>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub families: Option<Vec<Family>>,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default)]
    pub tuning: TuningSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSource {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub openml_id: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positive: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cache_dir: Option<PathBuf>,
}

/// Tuning knobs; the search seed is derived from the root seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TuningSection {
    pub samples_per_family: usize,
    pub inner_folds: usize,
    pub selection_metric: Metric,
}

impl Default for TuningSection {
    fn default() -> Self {
        let d = TuningConfig::default();
        Self {
            samples_per_family: d.samples_per_family,
            inner_folds: d.inner_folds,
            selection_metric: d.selection_metric,
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}
fn default_folds() -> usize {
    10
}
fn default_models() -> usize {
    100
}
fn default_ratio() -> f64 {
    irt_partition::partition::DEFAULT_TRAIN_RATIO
}

impl RunConfig {
    /// Parses a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut config = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        let config: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out);
        if let Some(p) = self.dataset.path.as_mut() {
            join(p);
        }
        if let Some(p) = self.dataset.cache_dir.as_mut() {
            join(p);
        }
    }

    pub fn validate(&self) -> CliResult<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.name.trim().is_empty() {
            return bad("name must not be empty".into());
        }
        match (&self.dataset.openml_id, &self.dataset.path) {
            (Some(_), Some(_)) => return bad("dataset: give either openml_id or path, not both".into()),
            (None, None) => return bad("dataset: one of openml_id or path is required".into()),
            _ => {}
        }
        if self.folds == 0 {
            return bad("folds must be at least 1".into());
        }
        if self.models == 0 {
            return bad("models must be at least 1".into());
        }
        if !(self.train_ratio > 0.0 && self.train_ratio < 1.0) {
            return bad(format!("train_ratio {} outside (0, 1)", self.train_ratio));
        }
        if matches!(&self.strategies, Some(s) if s.is_empty()) {
            return bad("strategies filter is empty".into());
        }
        if matches!(&self.families, Some(f) if f.is_empty()) {
            return bad("families filter is empty".into());
        }
        self.calibration
            .validate()
            .map_err(|e| CliError::Config(format!("calibration: {e}")))?;
        self.tuning_config()
            .validate()
            .map_err(|e| CliError::Config(format!("tuning: {e}")))?;
        Ok(())
    }

    pub fn strategies(&self) -> Vec<PartitionStrategy> {
        self.strategies.clone().unwrap_or_else(enumerate_strategies)
    }

    pub fn families(&self) -> Vec<Family> {
        self.families.clone().unwrap_or_else(|| Family::ROSTER.to_vec())
    }

    pub fn fold_seed(&self) -> u64 {
        derive_seed(self.seed, "folds")
    }

    pub fn model_seed(&self) -> u64 {
        derive_seed(self.seed, "models")
    }

    pub fn tuning_config(&self) -> TuningConfig {
        TuningConfig {
            samples_per_family: self.tuning.samples_per_family,
            inner_folds: self.tuning.inner_folds,
            selection_metric: self.tuning.selection_metric,
            seed: derive_seed(self.seed, "tuning"),
        }
    }

    /// Cache directory: `$IRT_PARTITION_CACHE`, else the configured one, else
    /// `$XDG_CACHE_HOME/irt-partition/openml` (or `~/.cache/...`).
    pub fn cache_dir(&self) -> PathBuf {
        if let Some(dir) = std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()) {
            return PathBuf::from(dir);
        }
        if let Some(dir) = &self.dataset.cache_dir {
            return dir.clone();
        }
        let base = std::env::var_os("XDG_CACHE_HOME")
            .map(PathBuf::from)
            .or_else(|| std::env::var_os("HOME").map(|h| PathBuf::from(h).join(".cache")))
            .unwrap_or_else(std::env::temp_dir);
        base.join("irt-partition").join("openml")
    }

    /// SHA-256 over the canonical JSON form of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex(&Sha256::digest(json))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
