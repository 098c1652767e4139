use super::linear::Standardizer;
use crate::dataset::FeatureMatrix;

/// k-nearest neighbours, Euclidean distance, majority vote. Equal distances
/// are resolved in favour of the earlier training row (rows arrive in
/// instance-id order); an even vote goes to the nearest neighbour's label.
#[derive(Clone, Debug, PartialEq)]
pub struct Knn {
    k: usize,
    standardizer: Option<Standardizer>,
    rows: FeatureMatrix,
    labels: Vec<u8>,
}

impl Knn {
    pub fn fit(x: &FeatureMatrix, y: &[u8], k: usize, standardize: bool) -> Self {
        let standardizer = standardize.then(|| Standardizer::fit(x));
        let rows = match &standardizer {
            Some(s) => s.transform(x),
            None => x.clone(),
        };
        Self {
            k: k.clamp(1, y.len().max(1)),
            standardizer,
            rows,
            labels: y.to_vec(),
        }
    }

    /// Indices of the k nearest training rows, nearest first.
    pub fn neighbours(&self, row: &[f64]) -> Vec<usize> {
        let query: Vec<f64> = match &self.standardizer {
            Some(s) => {
                let mut z = Vec::new();
                s.transform_into(row, &mut z);
                z
            }
            None => row.to_vec(),
        };
        let mut dist: Vec<(f64, usize)> = self
            .rows
            .rows()
            .enumerate()
            .map(|(i, r)| {
                let d2: f64 = r.iter().zip(&query).map(|(a, b)| (a - b) * (a - b)).sum();
                (d2, i)
            })
            .collect();
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if self.k < dist.len() {
            dist.select_nth_unstable_by(self.k - 1, cmp);
            dist.truncate(self.k);
        }
        dist.sort_by(cmp);
        dist.into_iter().map(|(_, i)| i).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let nn = self.neighbours(row);
        let pos = nn.iter().filter(|&&i| self.labels[i] == 1).count();
        let neg = nn.len() - pos;
        match pos.cmp(&neg) {
            std::cmp::Ordering::Greater => 1,
            std::cmp::Ordering::Less => 0,
            std::cmp::Ordering::Equal => self.labels[nn[0]],
        }
    }
}
