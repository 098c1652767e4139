use rand::Rng as _;

use super::linear::Standardizer;
use crate::dataset::FeatureMatrix;
use crate::rng::{rng_from_seed, shuffle};

#[derive(Clone, Copy, Debug)]
pub struct MlpParams {
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub alpha: f64,
}

/// One tanh hidden layer, logistic output, trained by mini-batch gradient
/// descent on L2-penalised log-loss. Keeps the weights of the epoch with the
/// lowest training objective.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    standardizer: Standardizer,
    hidden: usize,
    inputs: usize,
    /// hidden x inputs, row-major
    w1: Vec<f64>,
    b1: Vec<f64>,
    w2: Vec<f64>,
    b2: f64,
}

fn log1p_exp(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl Mlp {
    fn forward(&self, z: &[f64], act: &mut [f64]) -> f64 {
        let d = self.inputs;
        let mut out = self.b2;
        for h in 0..self.hidden {
            let w = &self.w1[h * d..(h + 1) * d];
            let s: f64 = w.iter().zip(z).map(|(a, b)| a * b).sum::<f64>() + self.b1[h];
            act[h] = s.tanh();
            out += self.w2[h] * act[h];
        }
        out
    }

    fn objective(&self, z: &FeatureMatrix, y: &[u8], alpha: f64, act: &mut [f64]) -> f64 {
        let mut loss = 0.0;
        for (row, &label) in z.rows().zip(y) {
            let s = self.forward(row, act);
            loss += if label == 1 { log1p_exp(-s) } else { log1p_exp(s) };
        }
        let l2: f64 = self.w1.iter().chain(&self.w2).map(|w| w * w).sum();
        loss / y.len() as f64 + 0.5 * alpha * l2 / y.len() as f64
    }

    pub fn fit(x: &FeatureMatrix, y: &[u8], params: &MlpParams, seed: u64) -> Self {
        let standardizer = Standardizer::fit(x);
        let z = standardizer.transform(x);
        let (n, d) = (z.n_rows(), z.n_cols());
        let h = params.hidden_units.max(1);
        let mut rng = rng_from_seed(seed);
        let bound1 = (6.0 / (d + h) as f64).sqrt();
        let bound2 = (6.0 / (h + 1) as f64).sqrt();
        let mut net = Mlp {
            standardizer,
            hidden: h,
            inputs: d,
            w1: (0..h * d).map(|_| rng.gen_range(-bound1..bound1)).collect(),
            b1: vec![0.0; h],
            w2: (0..h).map(|_| rng.gen_range(-bound2..bound2)).collect(),
            b2: 0.0,
        };
        let mut act = vec![0.0; h];
        let mut best_obj = net.objective(&z, y, params.alpha, &mut act);
        let mut best = net.clone();

        let batch = params.batch_size.clamp(1, n.max(1));
        let mut order: Vec<usize> = (0..n).collect();
        let mut g1 = vec![0.0; h * d];
        let mut gb1 = vec![0.0; h];
        let mut g2 = vec![0.0; h];
        for _ in 0..params.epochs {
            shuffle(&mut rng, &mut order);
            for chunk in order.chunks(batch) {
                g1.iter_mut().for_each(|v| *v = 0.0);
                gb1.iter_mut().for_each(|v| *v = 0.0);
                g2.iter_mut().for_each(|v| *v = 0.0);
                let mut gb2 = 0.0;
                for &i in chunk {
                    let row = z.row(i);
                    let s = net.forward(row, &mut act);
                    let delta = 1.0 / (1.0 + (-s).exp()) - f64::from(y[i]);
                    gb2 += delta;
                    for k in 0..h {
                        g2[k] += delta * act[k];
                        let dh = delta * net.w2[k] * (1.0 - act[k] * act[k]);
                        gb1[k] += dh;
                        let g = &mut g1[k * d..(k + 1) * d];
                        for (gj, xj) in g.iter_mut().zip(row) {
                            *gj += dh * xj;
                        }
                    }
                }
                let m = chunk.len() as f64;
                let reg = params.alpha / n as f64;
                let lr = params.learning_rate;
                for (w, g) in net.w1.iter_mut().zip(&g1) {
                    *w -= lr * (g / m + reg * *w);
                }
                for (b, g) in net.b1.iter_mut().zip(&gb1) {
                    *b -= lr * g / m;
                }
                for (w, g) in net.w2.iter_mut().zip(&g2) {
                    *w -= lr * (g / m + reg * *w);
                }
                net.b2 -= lr * gb2 / m;
            }
            let obj = net.objective(&z, y, params.alpha, &mut act);
            if !obj.is_finite() {
                break;
            }
            if obj < best_obj {
                best_obj = obj;
                best = net.clone();
            }
        }
        best
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut z = Vec::with_capacity(row.len());
        self.standardizer.transform_into(row, &mut z);
        let mut act = vec![0.0; self.hidden];
        u8::from(self.forward(&z, &mut act) > 0.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn learns_xor() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let (a, b) = ((i % 2) as f64, ((i / 2) % 2) as f64);
            let jitter = (i as f64) * 0.001;
            rows.push(vec![a + jitter, b - jitter]);
            y.push(u8::from((a > 0.5) != (b > 0.5)));
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let params = MlpParams {
            hidden_units: 8,
            learning_rate: 0.5,
            epochs: 300,
            batch_size: 8,
            alpha: 1e-5,
        };
        let net = Mlp::fit(&x, &y, &params, 3);
        let acc = x.rows().zip(&y).filter(|(r, &l)| net.predict_row(r) == l).count();
        assert!(acc >= 38, "{acc}");
    }

    #[test]
    fn fitting_is_deterministic() {
        let rows: Vec<Vec<f64>> = (0..30).map(|i| vec![i as f64, (i * i % 7) as f64]).collect();
        let y: Vec<u8> = (0..30).map(|i| u8::from(i % 4 == 0)).collect();
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let p = MlpParams {
            hidden_units: 5,
            learning_rate: 0.1,
            epochs: 10,
            batch_size: 16,
            alpha: 1e-3,
        };
        assert_eq!(Mlp::fit(&x, &y, &p, 9), Mlp::fit(&x, &y, &p, 9));
    }
}
