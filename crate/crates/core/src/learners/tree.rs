//! CART classification trees (weighted Gini) and Newton regression stumps.

use crate::dataset::FeatureMatrix;
use crate::rng::{sample_without_replacement, Rng};

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum MaxFeatures {
    All,
    Sqrt,
    Log2,
}

impl MaxFeatures {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "all" => Some(MaxFeatures::All),
            "sqrt" => Some(MaxFeatures::Sqrt),
            "log2" => Some(MaxFeatures::Log2),
            _ => None,
        }
    }

    fn count(self, d: usize) -> usize {
        let k = match self {
            MaxFeatures::All => d,
            MaxFeatures::Sqrt => (d as f64).sqrt().round() as usize,
            MaxFeatures::Log2 => (d as f64).log2().round() as usize,
        };
        k.clamp(1, d.max(1))
    }
}

#[derive(Clone, Copy, Debug)]
pub struct TreeParams {
    pub max_depth: usize,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    pub max_features: MaxFeatures,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: usize::MAX,
            min_samples_split: 2,
            min_samples_leaf: 1,
            max_features: MaxFeatures::All,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Node {
    Leaf(u8),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    impurity: f64,
}

fn gini(pos: f64, neg: f64) -> f64 {
    let total = pos + neg;
    if total <= 0.0 {
        0.0
    } else {
        let (p, n) = (pos / total, neg / total);
        total * (1.0 - p * p - n * n)
    }
}

/// Threshold between two distinct sorted values; `x <= threshold` goes left.
fn midpoint(lo: f64, hi: f64) -> f64 {
    let mid = 0.5 * (lo + hi);
    if mid >= hi {
        lo
    } else {
        mid
    }
}

impl Tree {
    /// Grows a tree on the rows listed in `indices` (repeats allowed, as in
    /// a bootstrap sample). Leaves predict the weighted majority class, ties
    /// going to class 0.
    pub fn fit(
        x: &FeatureMatrix,
        y: &[u8],
        weights: &[f64],
        indices: &[usize],
        params: &TreeParams,
        rng: &mut Rng,
    ) -> Tree {
        let mut tree = Tree { nodes: Vec::new() };
        let mut scratch = Vec::with_capacity(indices.len());
        tree.grow(x, y, weights, indices.to_vec(), 0, params, rng, &mut scratch);
        tree
    }

    #[allow(clippy::too_many_arguments)]
    fn grow(
        &mut self,
        x: &FeatureMatrix,
        y: &[u8],
        w: &[f64],
        members: Vec<usize>,
        depth: usize,
        params: &TreeParams,
        rng: &mut Rng,
        scratch: &mut Vec<(f64, u8, f64)>,
    ) -> usize {
        let (mut pos, mut neg) = (0.0, 0.0);
        for &i in &members {
            if y[i] == 1 {
                pos += w[i];
            } else {
                neg += w[i];
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(u8::from(pos > neg)));
        if depth >= params.max_depth
            || members.len() < params.min_samples_split
            || pos <= 0.0
            || neg <= 0.0
        {
            return id;
        }

        let d = x.n_cols();
        let features: Vec<usize> = match params.max_features.count(d) {
            k if k >= d => (0..d).collect(),
            k => sample_without_replacement(rng, d, k),
        };
        let mut best: Option<Candidate> = None;
        for &f in &features {
            scratch.clear();
            scratch.extend(members.iter().map(|&i| (x.get(i, f), y[i], w[i])));
            scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut lp, mut ln) = (0.0, 0.0);
            let n = scratch.len();
            for k in 0..n - 1 {
                let (v, label, wt) = scratch[k];
                if label == 1 {
                    lp += wt;
                } else {
                    ln += wt;
                }
                let next = scratch[k + 1].0;
                if v == next || k + 1 < params.min_samples_leaf || n - k - 1 < params.min_samples_leaf {
                    continue;
                }
                let impurity = gini(lp, ln) + gini(pos - lp, neg - ln);
                if best.as_ref().map_or(true, |b| impurity < b.impurity) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(v, next),
                        impurity,
                    });
                }
            }
        }
        // Like CART, an impure node splits even without an impurity decrease
        // (XOR-like data only separates after such a split).
        let Some(split) = best else {
            return id;
        };

        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = members
            .iter()
            .partition(|&&i| x.get(i, split.feature) <= split.threshold);
        drop(members);
        let left = self.grow(x, y, w, left_rows, depth + 1, params, rng, scratch);
        let right = self.grow(x, y, w, right_rows, depth + 1, params, rng, scratch);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }

    pub fn predict_row(&self, row: &[f64]) -> u8 {
        let mut node = 0;
        loop {
            match self.nodes[node] {
                Node::Leaf(label) => return label,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf(_) => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Depth-one regression tree whose leaves hold Newton steps `sum(g) / sum(h)`.
#[derive(Clone, Debug, PartialEq)]
pub struct RegressionStump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

const LEAF_CLAMP: f64 = 10.0;

fn newton_leaf(g: f64, h: f64) -> f64 {
    if h <= 1e-12 {
        0.0
    } else {
        (g / h).clamp(-LEAF_CLAMP, LEAF_CLAMP)
    }
}

impl RegressionStump {
    /// Chooses the split maximising `G_L^2/H_L + G_R^2/H_R`. Returns a
    /// single-valued stump when no split is possible.
    pub fn fit(x: &FeatureMatrix, grad: &[f64], hess: &[f64], indices: &[usize]) -> Self {
        let g_total: f64 = indices.iter().map(|&i| grad[i]).sum();
        let h_total: f64 = indices.iter().map(|&i| hess[i]).sum();
        let constant = newton_leaf(g_total, h_total);
        let mut best = RegressionStump {
            feature: 0,
            threshold: f64::INFINITY,
            left: constant,
            right: constant,
        };
        let score = |g: f64, h: f64| if h <= 1e-12 { 0.0 } else { g * g / h };
        let mut best_gain = score(g_total, h_total) + 1e-12;
        let mut col: Vec<(f64, f64, f64)> = Vec::with_capacity(indices.len());
        for f in 0..x.n_cols() {
            col.clear();
            col.extend(indices.iter().map(|&i| (x.get(i, f), grad[i], hess[i])));
            col.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (mut gl, mut hl) = (0.0, 0.0);
            for k in 0..col.len().saturating_sub(1) {
                gl += col[k].1;
                hl += col[k].2;
                if col[k].0 == col[k + 1].0 {
                    continue;
                }
                let gain = score(gl, hl) + score(g_total - gl, h_total - hl);
                if gain > best_gain {
                    best_gain = gain;
                    best = RegressionStump {
                        feature: f,
                        threshold: midpoint(col[k].0, col[k + 1].0),
                        left: newton_leaf(gl, hl),
                        right: newton_leaf(g_total - gl, h_total - hl),
                    };
                }
            }
        }
        best
    }

    pub fn predict_row(&self, row: &[f64]) -> f64 {
        if row[self.feature] <= self.threshold {
            self.left
        } else {
            self.right
        }
    }
}
