//! Tabular binary-classification datasets: parsing, fetching, stratification.

mod arff;
mod csv;
mod folds;
mod openml;

pub use self::arff::{parse_arff, ArffOptions};
pub use self::csv::{parse_csv, write_csv};
pub use self::folds::{stratified_folds, stratified_label_folds, FoldAssignment};
pub use self::openml::{fetch_openml, OpenMlClient, DEFAULT_OPENML_URL};

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum dataset size accepted by the calibration pipeline.
pub const MIN_PIPELINE_INSTANCES: usize = 20;

/// Stable identifier of a dataset row: its 0-based position in the source file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct InstanceId(pub u32);

impl fmt::Display for InstanceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for InstanceId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        s.trim().parse().map(InstanceId)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    Numeric,
    /// Integer-coded; the code of a value is its index in `levels`.
    Nominal(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub feature_names: Vec<String>,
    pub feature_kinds: Vec<FeatureKind>,
    pub target_name: String,
    pub positive_label: String,
    pub negative_label: String,
}

impl DatasetSchema {
    pub fn validate(&self) -> Result<()> {
        if self.feature_names.len() != self.feature_kinds.len() {
            return Err(Error::InvalidData(
                "feature names and kinds have different lengths".into(),
            ));
        }
        let mut seen = HashSet::new();
        for name in &self.feature_names {
            if name.is_empty() {
                return Err(Error::InvalidData("empty feature name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::InvalidData(format!("duplicate feature name `{name}`")));
            }
        }
        if seen.contains(self.target_name.as_str()) {
            return Err(Error::InvalidData(format!(
                "target `{}` is also a feature",
                self.target_name
            )));
        }
        if self.positive_label == self.negative_label {
            return Err(Error::InvalidData(
                "positive and negative labels must differ".into(),
            ));
        }
        Ok(())
    }
}

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::InvalidData(format!(
                "matrix data has {} values, expected {n_rows}x{n_cols}",
                data.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * n_cols);
        for row in rows {
            if row.len() != n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(rows.len(), n_cols, data)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.n_rows).map(move |i| self.row(i))
    }

    pub fn select_rows(&self, indices: &[usize]) -> FeatureMatrix {
        let mut data = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            data.extend_from_slice(self.row(i));
        }
        FeatureMatrix {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            data,
        }
    }
}

/// A parsed, imputed dataset. Labels are 1 for the positive class.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub rows: FeatureMatrix,
    pub labels: Vec<u8>,
    pub instance_ids: Vec<InstanceId>,
}

impl Dataset {
    pub fn new(schema: DatasetSchema, rows: FeatureMatrix, labels: Vec<u8>) -> Result<Self> {
        let ids = (0..labels.len() as u32).map(InstanceId).collect();
        Self::with_ids(schema, rows, labels, ids)
    }

    pub fn with_ids(
        schema: DatasetSchema,
        rows: FeatureMatrix,
        labels: Vec<u8>,
        instance_ids: Vec<InstanceId>,
    ) -> Result<Self> {
        schema.validate()?;
        if rows.n_cols() != schema.feature_names.len() {
            return Err(Error::DimensionMismatch {
                expected: schema.feature_names.len(),
                got: rows.n_cols(),
            });
        }
        if rows.n_rows() != labels.len() || labels.len() != instance_ids.len() {
            return Err(Error::InvalidData(
                "rows, labels and instance ids differ in length".into(),
            ));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(Error::InvalidData("labels must be 0 or 1".into()));
        }
        if rows.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidData("non-finite feature value".into()));
        }
        let unique: HashSet<_> = instance_ids.iter().collect();
        if unique.len() != instance_ids.len() {
            return Err(Error::InvalidData("duplicate instance ids".into()));
        }
        Ok(Self {
            schema,
            rows,
            labels,
            instance_ids,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.rows.n_cols()
    }

    /// Checks the size and class-presence requirements of the calibration pipeline.
    pub fn validate_for_pipeline(&self) -> Result<()> {
        if self.len() < MIN_PIPELINE_INSTANCES {
            return Err(Error::InvalidData(format!(
                "dataset has {} instances, at least {MIN_PIPELINE_INSTANCES} required",
                self.len()
            )));
        }
        let (pos, neg) = class_counts(self);
        if pos == 0 || neg == 0 {
            return Err(Error::InvalidData("both classes must be present".into()));
        }
        Ok(())
    }

    pub fn sample(&self, indices: &[usize]) -> Sample {
        Sample {
            rows: self.rows.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.instance_ids[i]).collect(),
        }
    }

    pub fn full_sample(&self) -> Sample {
        Sample {
            rows: self.rows.clone(),
            labels: self.labels.clone(),
            ids: self.instance_ids.clone(),
        }
    }

    pub fn index_of(&self) -> std::collections::HashMap<InstanceId, usize> {
        self.instance_ids
            .iter()
            .enumerate()
            .map(|(i, &id)| (id, i))
            .collect()
    }
}

/// An owned projection of some dataset rows, as handed to learners.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub rows: FeatureMatrix,
    pub labels: Vec<u8>,
    pub ids: Vec<InstanceId>,
}

impl Sample {
    /// Builds a sample whose ids are the row positions.
    pub fn new(rows: FeatureMatrix, labels: Vec<u8>) -> Result<Self> {
        if rows.n_rows() != labels.len() {
            return Err(Error::InvalidData(format!(
                "{} rows but {} labels",
                rows.n_rows(),
                labels.len()
            )));
        }
        let ids = (0..labels.len() as u32).map(InstanceId).collect();
        Ok(Self { rows, labels, ids })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Sample {
        Sample {
            rows: self.rows.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            ids: indices.iter().map(|&i| self.ids[i]).collect(),
        }
    }

    pub fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// `(n_positive, n_negative)`.
pub fn class_counts(dataset: &Dataset) -> (usize, usize) {
    let pos = dataset.labels.iter().filter(|&&l| l == 1).count();
    (pos, dataset.len() - pos)
}

/// A raw cell value before imputation.
#[derive(Clone, Debug, PartialEq)]
pub(crate) enum RawValue {
    Missing,
    Number(f64),
    Code(usize),
}

pub(crate) fn is_missing_token(s: &str) -> bool {
    matches!(s, "" | "?" | "NA" | "NaN" | "nan")
}

/// Fills missing cells column-wise: numeric columns with the median of the
/// observed values, nominal columns with the most frequent code (lowest code
/// on ties). A column with no observed values becomes 0.
pub(crate) fn impute(columns_numeric: &[bool], raw: Vec<Vec<RawValue>>) -> Vec<f64> {
    let n = raw.len();
    let d = columns_numeric.len();
    let mut fill = vec![0.0; d];
    for (j, &numeric) in columns_numeric.iter().enumerate() {
        if numeric {
            let mut vals: Vec<f64> = raw
                .iter()
                .filter_map(|r| match r[j] {
                    RawValue::Number(v) => Some(v),
                    _ => None,
                })
                .collect();
            if vals.is_empty() {
                continue;
            }
            vals.sort_by(f64::total_cmp);
            let m = vals.len();
            fill[j] = if m % 2 == 1 {
                vals[m / 2]
            } else {
                0.5 * (vals[m / 2 - 1] + vals[m / 2])
            };
        } else {
            let mut counts: Vec<usize> = Vec::new();
            for r in &raw {
                if let RawValue::Code(c) = r[j] {
                    if counts.len() <= c {
                        counts.resize(c + 1, 0);
                    }
                    counts[c] += 1;
                }
            }
            let mut best = 0;
            for (c, &count) in counts.iter().enumerate() {
                if count > counts[best] {
                    best = c;
                }
            }
            fill[j] = best as f64;
        }
    }
    let mut data = Vec::with_capacity(n * d);
    for row in raw {
        for (j, v) in row.into_iter().enumerate() {
            data.push(match v {
                RawValue::Missing => fill[j],
                RawValue::Number(x) => x,
                RawValue::Code(c) => c as f64,
            });
        }
    }
    data
}

/// Which target level is the positive class.
#[derive(Clone, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum PositiveClass {
    /// The less frequent label (ties: the label sorting second).
    #[default]
    Minority,
    Label(String),
}

/// Resolves the positive and negative label among exactly two candidate
/// levels, given the observed label counts.
pub(crate) fn resolve_labels(
    levels: &[String],
    counts: &[usize],
    positive: &PositiveClass,
) -> Result<(String, String)> {
    match positive {
        PositiveClass::Label(p) => {
            if !levels.iter().any(|l| l == p) {
                return Err(Error::InvalidData(format!(
                    "positive label `{p}` is not a target level (levels: {levels:?})"
                )));
            }
            let others: Vec<&String> = levels.iter().filter(|l| *l != p).collect();
            match others.as_slice() {
                [neg] => Ok((p.clone(), (*neg).clone())),
                _ => Err(Error::UnsupportedFormat(format!(
                    "target must have exactly two levels, found {levels:?}"
                ))),
            }
        }
        PositiveClass::Minority => {
            if levels.len() != 2 {
                return Err(Error::UnsupportedFormat(format!(
                    "target must have exactly two levels, found {levels:?}"
                )));
            }
            let (a, b) = (&levels[0], &levels[1]);
            let pos_is_a = counts[0] < counts[1] || (counts[0] == counts[1] && a > b);
            Ok(if pos_is_a {
                (a.clone(), b.clone())
            } else {
                (b.clone(), a.clone())
            })
        }
    }
}
