//! Tree ensembles: bagging, random forests, SAMME AdaBoost and logistic
//! gradient boosting of stumps.

use rand::Rng as _;

use super::tree::{MaxFeatures, RegressionStump, Tree, TreeParams};
use crate::dataset::FeatureMatrix;
use crate::rng::{derive_indexed, rng_from_seed, Rng};

/// Unweighted majority vote over member trees; ties go to class 0.
#[derive(Clone, Debug, PartialEq)]
pub struct VotingEnsemble {
    pub(crate) members: Vec<Tree>,
}

impl VotingEnsemble {
    /// Each member sees `sample_size` rows drawn with replacement.
    pub fn fit(
        x: &FeatureMatrix,
        y: &[u8],
        n_members: usize,
        sample_size: usize,
        params: &TreeParams,
        seed: u64,
    ) -> Self {
        let n = y.len();
        let weights = vec![1.0; n];
        let members = (0..n_members)
            .map(|m| {
                let mut rng = rng_from_seed(derive_indexed(seed, "member", m as u64));
                let bootstrap: Vec<usize> = (0..sample_size)
                    .map(|_| rng.gen_range(0..n as u64) as usize)
                    .collect();
                Tree::fit(x, y, &weights, &bootstrap, params, &mut rng)
            })
            .collect();
        Self { members }
    }

    pub fn member_votes(&self, row: &[f64]) -> Vec<u8> {
        self.members.iter().map(|t| t.predict_row(row)).collect()
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let votes = self.member_votes(row);
        let pos = votes.iter().filter(|&&v| v == 1).count();
        u8::from(2 * pos > votes.len())
    }
}

pub fn random_forest(
    x: &FeatureMatrix,
    y: &[u8],
    n_estimators: usize,
    max_depth: usize,
    min_samples_leaf: usize,
    max_features: MaxFeatures,
    seed: u64,
) -> VotingEnsemble {
    let params = TreeParams {
        max_depth,
        min_samples_split: 2,
        min_samples_leaf,
        max_features,
    };
    VotingEnsemble::fit(x, y, n_estimators, y.len(), &params, seed)
}

pub fn bagging(
    x: &FeatureMatrix,
    y: &[u8],
    n_estimators: usize,
    max_samples: f64,
    max_depth: usize,
    seed: u64,
) -> VotingEnsemble {
    let params = TreeParams {
        max_depth,
        ..Default::default()
    };
    let size = ((max_samples * y.len() as f64).ceil() as usize).clamp(1, y.len());
    VotingEnsemble::fit(x, y, n_estimators, size, &params, seed)
}

/// Binary SAMME: stumps fitted on reweighted data, combined by a weighted
/// vote `sum_t alpha_t * (+1 | -1)`; a non-positive total predicts class 0.
#[derive(Clone, Debug, PartialEq)]
pub struct AdaBoost {
    pub(crate) stumps: Vec<(Tree, f64)>,
}

impl AdaBoost {
    pub fn fit(x: &FeatureMatrix, y: &[u8], n_estimators: usize, learning_rate: f64) -> Self {
        let n = y.len();
        let indices: Vec<usize> = (0..n).collect();
        let mut w = vec![1.0 / n as f64; n];
        let params = TreeParams {
            max_depth: 1,
            ..Default::default()
        };
        // Stumps over all features never consume randomness.
        let mut rng = rng_from_seed(0);
        let mut stumps = Vec::new();
        for _ in 0..n_estimators {
            let stump = Tree::fit(x, y, &w, &indices, &params, &mut rng);
            let miss: Vec<bool> = (0..n).map(|i| stump.predict_row(x.row(i)) != y[i]).collect();
            let total: f64 = w.iter().sum();
            let err: f64 = (0..n).filter(|&i| miss[i]).map(|i| w[i]).sum::<f64>() / total;
            if err <= 0.0 {
                stumps.push((stump, 1.0));
                break;
            }
            if err >= 0.5 {
                if stumps.is_empty() {
                    stumps.push((stump, 1.0));
                }
                break;
            }
            let alpha = learning_rate * ((1.0 - err) / err).ln();
            for i in 0..n {
                if miss[i] {
                    w[i] *= alpha.exp();
                }
            }
            let s: f64 = w.iter().sum();
            w.iter_mut().for_each(|v| *v /= s);
            stumps.push((stump, alpha));
        }
        Self { stumps }
    }

    pub fn member_votes(&self, row: &[f64]) -> Vec<u8> {
        self.stumps.iter().map(|(t, _)| t.predict_row(row)).collect()
    }

    pub fn score(&self, row: &[f64]) -> f64 {
        self.stumps
            .iter()
            .map(|(t, alpha)| if t.predict_row(row) == 1 { *alpha } else { -*alpha })
            .sum()
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.score(row) > 0.0)
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Gradient boosting of Newton regression stumps under logistic loss.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBoosting {
    base: f64,
    learning_rate: f64,
    stumps: Vec<RegressionStump>,
}

impl GradientBoosting {
    pub fn fit(
        x: &FeatureMatrix,
        y: &[u8],
        n_estimators: usize,
        learning_rate: f64,
        subsample: f64,
        seed: u64,
    ) -> Self {
        let n = y.len();
        let pos = y.iter().filter(|&&v| v == 1).count() as f64;
        let p0 = (pos / n as f64).clamp(1e-6, 1.0 - 1e-6);
        let base = (p0 / (1.0 - p0)).ln();
        let mut f = vec![base; n];
        let mut rng: Rng = rng_from_seed(seed);
        let mut stumps = Vec::with_capacity(n_estimators);
        let mut grad = vec![0.0; n];
        let mut hess = vec![0.0; n];
        for _ in 0..n_estimators {
            for i in 0..n {
                let p = sigmoid(f[i]);
                grad[i] = f64::from(y[i]) - p;
                hess[i] = p * (1.0 - p);
            }
            let rows: Vec<usize> = if subsample < 1.0 {
                let picked: Vec<usize> = (0..n).filter(|_| rng.gen::<f64>() < subsample).collect();
                if picked.len() < 2 {
                    (0..n).collect()
                } else {
                    picked
                }
            } else {
                (0..n).collect()
            };
            let stump = RegressionStump::fit(x, &grad, &hess, &rows);
            for (i, fi) in f.iter_mut().enumerate() {
                *fi += learning_rate * stump.predict_row(x.row(i));
            }
            stumps.push(stump);
        }
        Self {
            base,
            learning_rate,
            stumps,
        }
    }

    pub fn decision(&self, row: &[f64]) -> f64 {
        self.base
            + self.learning_rate * self.stumps.iter().map(|s| s.predict_row(row)).sum::<f64>()
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) > 0.0)
    }
}
