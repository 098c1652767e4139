//! The models x instances correctness matrix.

use std::collections::HashSet;
use std::io::{Read, Write};

use rayon::prelude::*;

use crate::dataset::{Dataset, FoldAssignment, InstanceId};
use crate::error::{Error, Result};
use crate::learners::{train, LearnerSpec};

/// `cells[m][i] = 1` iff model `m` classified item `i` correctly when `i`
/// was held out.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseMatrix {
    pub model_ids: Vec<String>,
    pub item_ids: Vec<InstanceId>,
    /// Row-major, `model_ids.len() x item_ids.len()`.
    cells: Vec<u8>,
    /// Fold holding each item out. Imported matrices put every item in fold 0.
    pub fold_of_item: Vec<usize>,
}

/// Identifier of the `index`-th model of a population.
pub fn model_id(index: usize, spec: &LearnerSpec) -> String {
    format!("{index:03}-{}", spec.family)
}

impl ResponseMatrix {
    pub fn new(
        model_ids: Vec<String>,
        item_ids: Vec<InstanceId>,
        cells: Vec<u8>,
        fold_of_item: Vec<usize>,
    ) -> Result<Self> {
        if cells.len() != model_ids.len() * item_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: model_ids.len() * item_ids.len(),
                got: cells.len(),
            });
        }
        if fold_of_item.len() != item_ids.len() {
            return Err(Error::DimensionMismatch {
                expected: item_ids.len(),
                got: fold_of_item.len(),
            });
        }
        if cells.iter().any(|&c| c > 1) {
            return Err(Error::InvalidData("response cells must be 0 or 1".into()));
        }
        if model_ids.iter().collect::<HashSet<_>>().len() != model_ids.len() {
            return Err(Error::InvalidData("duplicate model id".into()));
        }
        if item_ids.iter().collect::<HashSet<_>>().len() != item_ids.len() {
            return Err(Error::InvalidData("duplicate item id".into()));
        }
        Ok(Self {
            model_ids,
            item_ids,
            cells,
            fold_of_item,
        })
    }

    pub fn from_rows(model_ids: Vec<String>, item_ids: Vec<InstanceId>, rows: &[Vec<u8>]) -> Result<Self> {
        let n = item_ids.len();
        if let Some(bad) = rows.iter().find(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: bad.len(),
            });
        }
        let cells = rows.concat();
        Self::new(model_ids, item_ids, cells, vec![0; n])
    }

    pub fn n_models(&self) -> usize {
        self.model_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn get(&self, model: usize, item: usize) -> u8 {
        self.cells[model * self.n_items() + item]
    }

    pub fn row(&self, model: usize) -> &[u8] {
        let n = self.n_items();
        &self.cells[model * n..(model + 1) * n]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[u8]> + '_ {
        self.cells.chunks(self.n_items().max(1)).take(self.n_models())
    }

    /// Proportion correct of each model (its pooled cross-validation accuracy).
    pub fn model_means(&self) -> Vec<f64> {
        self.rows()
            .map(|r| r.iter().map(|&c| f64::from(c)).sum::<f64>() / r.len().max(1) as f64)
            .collect()
    }

    /// Proportion of models answering each item correctly.
    pub fn item_means(&self) -> Vec<f64> {
        let mut sums = vec![0usize; self.n_items()];
        for row in self.rows() {
            for (s, &c) in sums.iter_mut().zip(row) {
                *s += usize::from(c);
            }
        }
        sums.into_iter()
            .map(|s| s as f64 / self.n_models().max(1) as f64)
            .collect()
    }

    /// The columns listed in `items`, in that order.
    pub fn select_items(&self, items: &[usize]) -> ResponseMatrix {
        let mut cells = Vec::with_capacity(self.n_models() * items.len());
        for row in self.rows() {
            cells.extend(items.iter().map(|&i| row[i]));
        }
        ResponseMatrix {
            model_ids: self.model_ids.clone(),
            item_ids: items.iter().map(|&i| self.item_ids[i]).collect(),
            cells,
            fold_of_item: items.iter().map(|&i| self.fold_of_item[i]).collect(),
        }
    }

    /// The rows listed in `models`, in that order.
    pub fn select_models(&self, models: &[usize]) -> ResponseMatrix {
        let mut cells = Vec::with_capacity(models.len() * self.n_items());
        for &m in models {
            cells.extend_from_slice(self.row(m));
        }
        ResponseMatrix {
            model_ids: models.iter().map(|&m| self.model_ids[m].clone()).collect(),
            item_ids: self.item_ids.clone(),
            cells,
            fold_of_item: self.fold_of_item.clone(),
        }
    }
}

/// Trains every spec on every fold's complement and records whether it gets
/// each held-out instance right. With a single fold, models are trained and
/// tested on the whole dataset.
pub fn build_response_matrix(
    dataset: &Dataset,
    folds: &FoldAssignment,
    specs: &[LearnerSpec],
) -> Result<ResponseMatrix> {
    if specs.is_empty() {
        return Err(Error::Precondition("no learner specs".into()));
    }
    if folds.fold_of.len() != dataset.len() {
        return Err(Error::DimensionMismatch {
            expected: dataset.len(),
            got: folds.fold_of.len(),
        });
    }
    let n = dataset.len();
    let splits: Vec<(Vec<usize>, Vec<usize>)> = if folds.k <= 1 {
        let all: Vec<usize> = (0..n).collect();
        vec![(all.clone(), all)]
    } else {
        (0..folds.k)
            .map(|f| (folds.complement(f), folds.members(f)))
            .collect()
    };
    let samples: Vec<_> = splits
        .iter()
        .map(|(train_idx, test_idx)| (dataset.sample(train_idx), dataset.rows.select_rows(test_idx)))
        .collect();

    let tasks: Vec<(usize, usize)> = (0..specs.len())
        .flat_map(|m| (0..splits.len()).map(move |f| (m, f)))
        .collect();
    let outcomes: Vec<Result<Vec<u8>>> = tasks
        .par_iter()
        .map(|&(m, f)| {
            let (train_sample, test_rows) = &samples[f];
            let model = train(&specs[m], train_sample).map_err(|e| Error::Training {
                model: format!("{} {}", model_id(m, &specs[m]), specs[m]),
                reason: e.to_string(),
            })?;
            model.predict(test_rows)
        })
        .collect();

    let mut cells = vec![0u8; specs.len() * n];
    for (&(m, f), outcome) in tasks.iter().zip(outcomes) {
        let predictions = outcome?;
        for (&i, p) in splits[f].1.iter().zip(predictions) {
            cells[m * n + i] = u8::from(p == dataset.labels[i]);
        }
    }
    let model_ids = specs.iter().enumerate().map(|(m, s)| model_id(m, s)).collect();
    let fold_of_item = if folds.k <= 1 {
        vec![0; n]
    } else {
        folds.fold_of.clone()
    };
    ResponseMatrix::new(model_ids, dataset.instance_ids.clone(), cells, fold_of_item)
}

/// CSV with header `model_id,<item ids>` and one `0`/`1` row per model.
pub fn export_matrix(matrix: &ResponseMatrix, sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["model_id".to_string()];
    header.extend(matrix.item_ids.iter().map(|id| id.to_string()));
    w.write_record(&header)?;
    for (id, row) in matrix.model_ids.iter().zip(matrix.rows()) {
        let mut record = vec![id.clone()];
        record.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

pub fn import_matrix(source: impl Read) -> Result<ResponseMatrix> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(source);
    let mut records = r.records();
    let header = records
        .next()
        .ok_or_else(|| Error::parse(1, "empty matrix file"))??;
    if header.get(0).map(str::trim) != Some("model_id") {
        return Err(Error::parse(1, "header must start with model_id"));
    }
    let item_ids = header
        .iter()
        .skip(1)
        .map(|s| {
            s.trim()
                .parse::<InstanceId>()
                .map_err(|_| Error::parse(1, format!("bad item id {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut model_ids = Vec::new();
    let mut cells = Vec::new();
    for (k, record) in records.enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != item_ids.len() + 1 {
            return Err(Error::parse(
                line,
                format!("{} fields, expected {}", record.len(), item_ids.len() + 1),
            ));
        }
        model_ids.push(record[0].trim().to_string());
        for cell in record.iter().skip(1) {
            cells.push(match cell.trim() {
                "0" => 0,
                "1" => 1,
                other => return Err(Error::parse(line, format!("non-binary cell {other:?}"))),
            });
        }
    }
    let n = item_ids.len();
    ResponseMatrix::new(model_ids, item_ids, cells, vec![0; n])
}
