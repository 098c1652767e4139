//! Linear decision rules: LDA, logistic regression and a linear SVM.

use crate::dataset::FeatureMatrix;
use crate::rng::{rng_from_seed, shuffle};

/// Column-wise z-scoring fitted on training rows. Constant columns keep
/// scale 1.
#[derive(Clone, Debug, PartialEq)]
pub struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &FeatureMatrix) -> Self {
        let (n, d) = (x.n_rows(), x.n_cols());
        let mut mean = vec![0.0; d];
        for row in x.rows() {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n.max(1) as f64);
        let mut var = vec![0.0; d];
        for row in x.rows() {
            for j in 0..d {
                let dv = row[j] - mean[j];
                var[j] += dv * dv;
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let s = (v / n.max(1) as f64).sqrt();
                if s > 1e-12 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    pub fn transform_into(&self, row: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            row.iter()
                .zip(self.mean.iter().zip(&self.scale))
                .map(|(v, (m, s))| (v - m) / s),
        );
    }

    pub fn transform(&self, x: &FeatureMatrix) -> FeatureMatrix {
        let mut data = Vec::with_capacity(x.n_rows() * x.n_cols());
        let mut buf = Vec::new();
        for row in x.rows() {
            self.transform_into(row, &mut buf);
            data.extend_from_slice(&buf);
        }
        FeatureMatrix::new(x.n_rows(), x.n_cols(), data).expect("shape preserved")
    }
}

/// `predict(x) = 1 iff w . z(x) + bias > 0`, with `z` the optional
/// standardization.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearModel {
    standardizer: Option<Standardizer>,
    weights: Vec<f64>,
    bias: f64,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl LinearModel {
    pub fn decision(&self, row: &[f64]) -> f64 {
        match &self.standardizer {
            Some(s) => {
                let mut z = Vec::with_capacity(row.len());
                s.transform_into(row, &mut z);
                dot(&self.weights, &z) + self.bias
            }
            None => dot(&self.weights, row) + self.bias,
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        u8::from(self.decision(row) > 0.0)
    }
}

/// In-place Cholesky solve of `a x = b` for symmetric positive-definite `a`
/// (row-major d x d). Returns `None` if `a` is not positive definite.
pub(crate) fn cholesky_solve(a: &[f64], b: &[f64], d: usize) -> Option<Vec<f64>> {
    let mut l = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..=i {
            let mut s = a[i * d + j];
            for k in 0..j {
                s -= l[i * d + k] * l[j * d + k];
            }
            if i == j {
                if s <= 0.0 || !s.is_finite() {
                    return None;
                }
                l[i * d + i] = s.sqrt();
            } else {
                l[i * d + j] = s / l[j * d + j];
            }
        }
    }
    let mut y = vec![0.0; d];
    for i in 0..d {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i * d + k] * y[k];
        }
        y[i] = s / l[i * d + i];
    }
    let mut x = vec![0.0; d];
    for i in (0..d).rev() {
        let mut s = y[i];
        for k in i + 1..d {
            s -= l[k * d + i] * x[k];
        }
        x[i] = s / l[i * d + i];
    }
    Some(x)
}

/// Two-class LDA with pooled covariance, optional shrinkage toward
/// `trace/d * I`, and a ridge of `1e-6 * trace/d` on the diagonal.
/// `None` when the covariance is degenerate (all features constant).
pub fn lda(x: &FeatureMatrix, y: &[u8], shrinkage: f64) -> Option<LinearModel> {
    let d = x.n_cols();
    let mut mu = [vec![0.0; d], vec![0.0; d]];
    let mut counts = [0usize; 2];
    for (row, &label) in x.rows().zip(y) {
        let c = usize::from(label);
        counts[c] += 1;
        for j in 0..d {
            mu[c][j] += row[j];
        }
    }
    for c in 0..2 {
        let n = counts[c].max(1) as f64;
        mu[c].iter_mut().for_each(|m| *m /= n);
    }
    let mut cov = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for (row, &label) in x.rows().zip(y) {
        let m = &mu[usize::from(label)];
        for j in 0..d {
            centered[j] = row[j] - m[j];
        }
        for i in 0..d {
            for j in 0..=i {
                cov[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    let dof = (y.len().saturating_sub(2)).max(1) as f64;
    for i in 0..d {
        for j in 0..=i {
            cov[i * d + j] /= dof;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    if !(trace > 0.0) {
        return None;
    }
    let avg = trace / d as f64;
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] *= 1.0 - shrinkage;
        }
        cov[i * d + i] += shrinkage * avg + 1e-6 * avg;
    }
    let diff: Vec<f64> = (0..d).map(|j| mu[1][j] - mu[0][j]).collect();
    let w = cholesky_solve(&cov, &diff, d)?;
    let mid: Vec<f64> = (0..d).map(|j| 0.5 * (mu[0][j] + mu[1][j])).collect();
    let prior = (counts[1] as f64 / counts[0] as f64).ln();
    let bias = -dot(&w, &mid) + prior;
    Some(LinearModel {
        standardizer: None,
        weights: w,
        bias,
    })
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Full-batch gradient descent on L2-penalised log-loss over standardized
/// features. Returns the iterate with the lowest training objective.
pub fn logistic_regression(
    x: &FeatureMatrix,
    y: &[u8],
    learning_rate: f64,
    l2: f64,
    max_iter: usize,
) -> LinearModel {
    let std = Standardizer::fit(x);
    let z = std.transform(x);
    let (n, d) = (z.n_rows(), z.n_cols());
    let objective = |w: &[f64], b: f64| -> f64 {
        let mut loss = 0.0;
        for (row, &label) in z.rows().zip(y) {
            let s = dot(w, row) + b;
            // -log p(label)
            loss += if label == 1 { log1p_exp(-s) } else { log1p_exp(s) };
        }
        loss / n as f64 + 0.5 * l2 * dot(w, w)
    };
    let mut w = vec![0.0; d];
    let mut b = 0.0;
    let mut best = (objective(&w, b), w.clone(), b);
    let mut grad = vec![0.0; d];
    for _ in 0..max_iter {
        grad.iter_mut().for_each(|g| *g = 0.0);
        let mut gb = 0.0;
        for (row, &label) in z.rows().zip(y) {
            let r = sigmoid(dot(&w, row) + b) - f64::from(label);
            for j in 0..d {
                grad[j] += r * row[j];
            }
            gb += r;
        }
        for j in 0..d {
            w[j] -= learning_rate * (grad[j] / n as f64 + l2 * w[j]);
        }
        b -= learning_rate * gb / n as f64;
        let obj = objective(&w, b);
        if !obj.is_finite() {
            break;
        }
        if obj < best.0 {
            best = (obj, w.clone(), b);
        }
    }
    LinearModel {
        standardizer: Some(std),
        weights: best.1,
        bias: best.2,
    }
}

/// Pegasos stochastic sub-gradient descent on the regularized hinge loss,
/// with the bias as an extra (regularized) constant feature. The best epoch
/// by training objective is kept.
pub fn linear_svm(x: &FeatureMatrix, y: &[u8], lambda: f64, epochs: usize, seed: u64) -> LinearModel {
    let std = Standardizer::fit(x);
    let z = std.transform(x);
    let (n, d) = (z.n_rows(), z.n_cols());
    let sign = |label: u8| if label == 1 { 1.0 } else { -1.0 };
    // w[d] is the bias weight on a constant input of 1.
    let score = |w: &[f64], row: &[f64]| dot(&w[..d], row) + w[d];
    let objective = |w: &[f64]| -> f64 {
        let hinge: f64 = z
            .rows()
            .zip(y)
            .map(|(row, &l)| (1.0 - sign(l) * score(w, row)).max(0.0))
            .sum();
        hinge / n as f64 + 0.5 * lambda * dot(w, w)
    };
    let mut w = vec![0.0; d + 1];
    let mut best = (objective(&w), w.clone());
    let mut rng = rng_from_seed(seed);
    let mut order: Vec<usize> = (0..n).collect();
    let radius = 1.0 / lambda.sqrt();
    let mut t = 0usize;
    for _ in 0..epochs {
        shuffle(&mut rng, &mut order);
        for &i in &order {
            t += 1;
            let eta = 1.0 / (lambda * t as f64);
            let row = z.row(i);
            let yi = sign(y[i]);
            let margin = yi * score(&w, row);
            let shrink = 1.0 - eta * lambda;
            w.iter_mut().for_each(|v| *v *= shrink);
            if margin < 1.0 {
                for j in 0..d {
                    w[j] += eta * yi * row[j];
                }
                w[d] += eta * yi;
            }
            let norm = dot(&w, &w).sqrt();
            if norm > radius {
                let f = radius / norm;
                w.iter_mut().for_each(|v| *v *= f);
            }
        }
        let obj = objective(&w);
        if !obj.is_finite() {
            break;
        }
        if obj < best.0 {
            best = (obj, w.clone());
        }
    }
    let w = best.1;
    LinearModel {
        standardizer: Some(std),
        bias: w[d],
        weights: w[..d].to_vec(),
    }
}
