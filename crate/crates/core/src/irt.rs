//! Three-parameter logistic item calibration by marginal maximum likelihood.
//!
//! Abilities are integrated out against a fixed N(0, 1) prior on a
//! Gauss-Hermite grid, and item parameters are fitted with Bock-Aitkin EM:
//! the E-step turns each respondent's posterior over the grid into expected
//! counts `(r_iq, n_q)`; the M-step maximises, item by item,
//!
//! ```text
//! sum_q r_iq ln P_i(theta_q) + (n_q - r_iq) ln(1 - P_i(theta_q))
//! ```
//!
//! with `P(theta) = c + (1 - c) / (1 + exp(-a (theta - b)))`.
//!
//! Identical response patterns are merged (and sorted) before fitting, so
//! the result does not depend on respondent order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::InstanceId;
use crate::error::{Error, Result};
use crate::learners::linear::cholesky_solve;
use crate::response::ResponseMatrix;
use crate::rng::rng_from_seed;

/// Probabilities are kept inside `[P_FLOOR, 1 - P_FLOOR]` before taking logs.
pub const P_FLOOR: f64 = 1e-10;
/// Box on the logit of `c / c_max`.
const GAMMA_MAX: f64 = 20.0;

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// The 3PL item characteristic curve.
pub fn icc_3pl(theta: f64, a: f64, b: f64, c: f64) -> f64 {
    c + (1.0 - c) * sigmoid(a * (theta - b))
}

/// `(ln P, ln (1 - P))` with both probabilities clamped away from 0 and 1.
fn log_probs(theta: f64, a: f64, b: f64, c: f64) -> (f64, f64) {
    let z = a * (theta - b);
    let p1 = (c + (1.0 - c) * sigmoid(z)).clamp(P_FLOOR, 1.0 - P_FLOOR);
    let p0 = ((1.0 - c) * sigmoid(-z)).clamp(P_FLOOR, 1.0 - P_FLOOR);
    (p1.ln(), p0.ln())
}

/// Sum in a fixed pairwise order.
fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 8 {
        xs.iter().sum()
    } else {
        let mid = xs.len() / 2;
        pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
    }
}

/// Ability nodes with weights of the standard-normal prior.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl QuadratureGrid {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Physicists' Gauss-Hermite rule (weight `exp(-x^2)`), nodes descending.
fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // pi^(-1/4)
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-0.16667),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (PIM4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        w[i] = 2.0 / (pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Gauss-Hermite nodes scaled by `sqrt(2)`, weights divided by `sqrt(pi)`
/// (then renormalised to absorb rounding), nodes ascending.
pub fn make_grid(q: usize) -> Result<QuadratureGrid> {
    if q < 5 {
        return Err(Error::Precondition(format!("quadrature needs at least 5 nodes, got {q}")));
    }
    let (x, w) = gauss_hermite(q);
    let nodes: Vec<f64> = x.iter().rev().map(|v| v * std::f64::consts::SQRT_2).collect();
    let scaled: Vec<f64> = w.iter().rev().map(|v| v / std::f64::consts::PI.sqrt()).collect();
    let total = pairwise_sum(&scaled);
    Ok(QuadratureGrid {
        nodes,
        weights: scaled.iter().map(|v| v / total).collect(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ItemFlag {
    Calibrated,
    DegenerateAllCorrect,
    DegenerateAllWrong,
    BoundaryClamped,
}

impl ItemFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            ItemFlag::Calibrated => "calibrated",
            ItemFlag::DegenerateAllCorrect => "degenerate_all_correct",
            ItemFlag::DegenerateAllWrong => "degenerate_all_wrong",
            ItemFlag::BoundaryClamped => "boundary_clamped",
        }
    }

    /// All-correct or all-wrong: parameters are imputed, not estimated.
    pub fn is_degenerate(self) -> bool {
        matches!(self, ItemFlag::DegenerateAllCorrect | ItemFlag::DegenerateAllWrong)
    }
}

impl fmt::Display for ItemFlag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ItemFlag {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        [
            ItemFlag::Calibrated,
            ItemFlag::DegenerateAllCorrect,
            ItemFlag::DegenerateAllWrong,
            ItemFlag::BoundaryClamped,
        ]
        .into_iter()
        .find(|f| f.as_str() == s)
        .ok_or_else(|| Error::InvalidData(format!("unknown item flag {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemParameters {
    pub item_id: InstanceId,
    pub discrimination: f64,
    pub difficulty: f64,
    pub guessing: f64,
    pub flag: ItemFlag,
}

impl ItemParameters {
    pub fn new(item_id: InstanceId, a: f64, b: f64, c: f64) -> Self {
        Self {
            item_id,
            discrimination: a,
            difficulty: b,
            guessing: c,
            flag: ItemFlag::Calibrated,
        }
    }

    pub fn prob(&self, theta: f64) -> f64 {
        icc_3pl(theta, self.discrimination, self.difficulty, self.guessing)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CalibrationConfig {
    pub quadrature_points: usize,
    pub max_em_iters: usize,
    /// Absolute change in observed log-likelihood that ends EM.
    pub loglik_tol: f64,
    /// Objective gain below which the per-item Newton loop stops.
    pub m_step_tol: f64,
    pub m_step_max_iters: usize,
    pub c_max: f64,
    pub a_max: f64,
    pub b_max: f64,
    pub init_a: f64,
    pub init_c: f64,
    /// Proportion-correct clamp used for the difficulty start `-logit(p)`.
    pub init_p_clamp: f64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            quadrature_points: 21,
            max_em_iters: 500,
            loglik_tol: 1e-4,
            m_step_tol: 1e-9,
            m_step_max_iters: 50,
            c_max: 0.95,
            a_max: 50.0,
            b_max: 6.0,
            init_a: 1.0,
            init_c: 0.05,
            init_p_clamp: 0.02,
        }
    }
}

impl CalibrationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(format!("calibration config: {m}")));
        if self.quadrature_points < 5 {
            return bad("quadrature_points must be at least 5");
        }
        if !(self.loglik_tol > 0.0 && self.m_step_tol > 0.0) {
            return bad("tolerances must be positive");
        }
        if !(self.c_max > 0.0 && self.c_max < 1.0) {
            return bad("c_max must lie in (0, 1)");
        }
        if !(self.a_max > 0.0 && self.b_max > 0.0) {
            return bad("a_max and b_max must be positive");
        }
        if !(0.0..=self.c_max).contains(&self.init_c) {
            return bad("init_c must lie in [0, c_max]");
        }
        if !(self.init_p_clamp > 0.0 && self.init_p_clamp < 0.5) {
            return bad("init_p_clamp must lie in (0, 0.5)");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationResult {
    pub items: Vec<ItemParameters>,
    /// Observed-data log-likelihood before the first and after every M-step.
    pub loglik_trace: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub warnings: Vec<String>,
}

/// Distinct response rows (over the calibrated items) with multiplicities.
struct Patterns {
    rows: Vec<Vec<u8>>,
    counts: Vec<f64>,
}

impl Patterns {
    fn compress(matrix: &ResponseMatrix, items: &[usize]) -> Self {
        let mut tally: BTreeMap<Vec<u8>, usize> = BTreeMap::new();
        for row in matrix.rows() {
            *tally.entry(items.iter().map(|&i| row[i]).collect()).or_default() += 1;
        }
        let (rows, counts) = tally.into_iter().map(|(r, c)| (r, c as f64)).unzip();
        Self { rows, counts }
    }

    fn uncompressed(matrix: &ResponseMatrix) -> Self {
        Self {
            rows: matrix.rows().map(<[u8]>::to_vec).collect(),
            counts: vec![1.0; matrix.n_models()],
        }
    }
}

/// Expected counts of one E-step.
#[derive(Clone, Debug, PartialEq)]
pub struct EStep {
    /// One posterior over the grid per respondent row, row-major `rows x Q`.
    pub posterior: Vec<f64>,
    /// Expected correct responses, row-major `items x Q`.
    pub r_bar: Vec<f64>,
    /// Expected respondents per node.
    pub n_bar: Vec<f64>,
    pub loglik: f64,
}

impl EStep {
    pub fn posterior_row(&self, row: usize, q: usize) -> &[f64] {
        &self.posterior[row * q..(row + 1) * q]
    }

    pub fn r_bar_item(&self, item: usize, q: usize) -> &[f64] {
        &self.r_bar[item * q..(item + 1) * q]
    }
}

fn log_prob_tables(params: &[(f64, f64, f64)], grid: &QuadratureGrid) -> (Vec<f64>, Vec<f64>) {
    let q = grid.len();
    let mut lp1 = Vec::with_capacity(params.len() * q);
    let mut lp0 = Vec::with_capacity(params.len() * q);
    for &(a, b, c) in params {
        for &theta in &grid.nodes {
            let (l1, l0) = log_probs(theta, a, b, c);
            lp1.push(l1);
            lp0.push(l0);
        }
    }
    (lp1, lp0)
}

fn run_e_step(patterns: &Patterns, params: &[(f64, f64, f64)], grid: &QuadratureGrid) -> EStep {
    let q = grid.len();
    let n_items = params.len();
    let (lp1, lp0) = log_prob_tables(params, grid);
    let log_w: Vec<f64> = grid.weights.iter().map(|w| w.ln()).collect();
    let per_pattern: Vec<(f64, Vec<f64>)> = patterns
        .rows
        .par_iter()
        .map(|row| {
            let mut lw = log_w.clone();
            for (i, &x) in row.iter().enumerate() {
                let table = if x == 1 { &lp1 } else { &lp0 };
                for (l, t) in lw.iter_mut().zip(&table[i * q..(i + 1) * q]) {
                    *l += t;
                }
            }
            let m = lw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mut post: Vec<f64> = lw.iter().map(|l| (l - m).exp()).collect();
            let s: f64 = post.iter().sum();
            post.iter_mut().for_each(|p| *p /= s);
            (m + s.ln(), post)
        })
        .collect();

    let mut n_bar = vec![0.0; q];
    let mut r_bar = vec![0.0; n_items * q];
    let mut terms = Vec::with_capacity(per_pattern.len());
    let mut posterior = Vec::with_capacity(per_pattern.len() * q);
    for ((ll, post), (row, &count)) in per_pattern.iter().zip(patterns.rows.iter().zip(&patterns.counts)) {
        terms.push(count * ll);
        for (nb, p) in n_bar.iter_mut().zip(post) {
            *nb += count * p;
        }
        for (i, &x) in row.iter().enumerate() {
            if x == 1 {
                for (r, p) in r_bar[i * q..(i + 1) * q].iter_mut().zip(post) {
                    *r += count * p;
                }
            }
        }
        posterior.extend_from_slice(post);
    }
    EStep {
        posterior,
        r_bar,
        n_bar,
        loglik: pairwise_sum(&terms),
    }
}

fn as_triples(items: &[ItemParameters]) -> Vec<(f64, f64, f64)> {
    items
        .iter()
        .map(|p| (p.discrimination, p.difficulty, p.guessing))
        .collect()
}

fn check_alignment(matrix: &ResponseMatrix, items: &[ItemParameters]) -> Result<()> {
    if items.len() != matrix.n_items() {
        return Err(Error::DimensionMismatch {
            expected: matrix.n_items(),
            got: items.len(),
        });
    }
    Ok(())
}

/// `sum_m ln sum_q w_q prod_i P_i(theta_q)^x_mi (1 - P_i(theta_q))^(1 - x_mi)`.
pub fn observed_loglik(matrix: &ResponseMatrix, items: &[ItemParameters], grid: &QuadratureGrid) -> Result<f64> {
    Ok(e_step(matrix, items, grid)?.loglik)
}

/// Posterior of every model (matrix row order) plus expected counts.
pub fn e_step(matrix: &ResponseMatrix, items: &[ItemParameters], grid: &QuadratureGrid) -> Result<EStep> {
    check_alignment(matrix, items)?;
    Ok(run_e_step(&Patterns::uncompressed(matrix), &as_triples(items), grid))
}

/// Per-item M-step state in optimisation coordinates `(a, b, gamma)` with
/// `c = c_max * sigmoid(gamma)`.
struct ItemProblem<'a> {
    r: &'a [f64],
    n: &'a [f64],
    nodes: &'a [f64],
    c_max: f64,
    lo: [f64; 3],
    hi: [f64; 3],
}

impl ItemProblem<'_> {
    fn objective(&self, x: &[f64; 3]) -> f64 {
        let c = self.c_max * sigmoid(x[2]);
        let mut total = 0.0;
        for ((&theta, &r), &n) in self.nodes.iter().zip(self.r).zip(self.n) {
            let (l1, l0) = log_probs(theta, x[0], x[1], c);
            total += r * l1 + (n - r) * l0;
        }
        total
    }

    /// Analytic gradient and Hessian of the (unclamped) objective.
    fn derivatives(&self, x: &[f64; 3]) -> ([f64; 3], [[f64; 3]; 3]) {
        let (a, b, gamma) = (x[0], x[1], x[2]);
        let sg = sigmoid(gamma);
        let c = self.c_max * sg;
        let dc = self.c_max * sg * (1.0 - sg);
        let d2c = dc * (1.0 - 2.0 * sg);
        let k = 1.0 - c;
        let mut g = [0.0; 3];
        let mut h = [[0.0; 3]; 3];
        for ((&theta, &r), &n) in self.nodes.iter().zip(self.r).zip(self.n) {
            let u = theta - b;
            let s = sigmoid(a * u);
            let s1 = s * (1.0 - s);
            let s2 = s1 * (1.0 - 2.0 * s);
            let p = (c + k * s).clamp(P_FLOOR, 1.0 - P_FLOOR);
            let dp = [k * s1 * u, -k * s1 * a, (1.0 - s) * dc];
            let d2p = [
                [k * s2 * u * u, -k * (s2 * a * u + s1), -dc * s1 * u],
                [0.0, k * s2 * a * a, dc * s1 * a],
                [0.0, 0.0, (1.0 - s) * d2c],
            ];
            let w1 = r / p - (n - r) / (1.0 - p);
            let w2 = -r / (p * p) - (n - r) / ((1.0 - p) * (1.0 - p));
            for j in 0..3 {
                g[j] += w1 * dp[j];
                for l in j..3 {
                    h[j][l] += w2 * dp[j] * dp[l] + w1 * d2p[j][l];
                }
            }
        }
        for j in 0..3 {
            for l in 0..j {
                h[j][l] = h[l][j];
            }
        }
        (g, h)
    }

    fn project(&self, x: [f64; 3]) -> [f64; 3] {
        let mut out = x;
        for j in 0..3 {
            out[j] = x[j].clamp(self.lo[j], self.hi[j]);
        }
        out
    }
}

fn newton_direction(g: &[f64; 3], h: &[[f64; 3]; 3]) -> Option<[f64; 3]> {
    let neg: Vec<f64> = h.iter().flat_map(|row| row.iter().map(|v| -v)).collect();
    let d = cholesky_solve(&neg, g, 3)?;
    d.iter().all(|v| v.is_finite()).then(|| [d[0], d[1], d[2]])
}

fn gradient_direction(g: &[f64; 3]) -> Option<[f64; 3]> {
    let norm = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
    (norm > 0.0 && norm.is_finite()).then(|| {
        let s = 1.0 / norm.max(1.0);
        [g[0] * s, g[1] * s, g[2] * s]
    })
}

fn boundary_flag(a: f64, b: f64, config: &CalibrationConfig) -> ItemFlag {
    let at = |v: f64, bound: f64| v.abs() >= bound * (1.0 - 1e-9);
    if at(a, config.a_max) || at(b, config.b_max) {
        ItemFlag::BoundaryClamped
    } else {
        ItemFlag::Calibrated
    }
}

/// Maximises one item's expected complete-data log-likelihood by projected
/// Newton steps with step halving; only strictly improving steps are taken,
/// so the objective never decreases.
pub fn m_step_item(
    r_bar: &[f64],
    n_bar: &[f64],
    grid: &QuadratureGrid,
    current: &ItemParameters,
    config: &CalibrationConfig,
) -> ItemParameters {
    let problem = ItemProblem {
        r: r_bar,
        n: n_bar,
        nodes: &grid.nodes,
        c_max: config.c_max,
        lo: [-config.a_max, -config.b_max, -GAMMA_MAX],
        hi: [config.a_max, config.b_max, GAMMA_MAX],
    };
    let ratio = (current.guessing / config.c_max).clamp(sigmoid(-GAMMA_MAX), sigmoid(GAMMA_MAX));
    let mut x = problem.project([current.discrimination, current.difficulty, logit(ratio)]);
    let mut f = problem.objective(&x);
    let start_f = problem.objective(&x);
    let mut moved = false;
    for _ in 0..config.m_step_max_iters {
        let (g, h) = problem.derivatives(&x);
        let mut step = None;
        for direction in [newton_direction(&g, &h), gradient_direction(&g)].into_iter().flatten() {
            let mut t = 1.0;
            for _ in 0..50 {
                let cand = problem.project([
                    x[0] + t * direction[0],
                    x[1] + t * direction[1],
                    x[2] + t * direction[2],
                ]);
                if cand == x {
                    break;
                }
                let fc = problem.objective(&cand);
                if fc > f {
                    step = Some((cand, fc));
                    // A full step that helps may be too short when the
                    // optimum sits on the box: keep doubling while it pays.
                    if t == 1.0 {
                        for _ in 0..30 {
                            t *= 2.0;
                            let further = problem.project([
                                x[0] + t * direction[0],
                                x[1] + t * direction[1],
                                x[2] + t * direction[2],
                            ]);
                            let ff = problem.objective(&further);
                            match step {
                                Some((prev, fp)) if ff > fp && further != prev => {
                                    step = Some((further, ff))
                                }
                                _ => break,
                            }
                        }
                    }
                    break;
                }
                t *= 0.5;
            }
            if step.is_some() {
                break;
            }
        }
        let Some((cand, fc)) = step else { break };
        let gain = fc - f;
        x = cand;
        f = fc;
        moved = true;
        if gain < config.m_step_tol {
            break;
        }
    }
    if !moved || f <= start_f {
        return current.clone();
    }
    let (a, b) = (x[0], x[1]);
    ItemParameters {
        item_id: current.item_id,
        discrimination: a,
        difficulty: b,
        guessing: config.c_max * sigmoid(x[2]),
        flag: boundary_flag(a, b, config),
    }
}

fn initial_parameters(item_id: InstanceId, p: f64, config: &CalibrationConfig) -> ItemParameters {
    let p = p.clamp(config.init_p_clamp, 1.0 - config.init_p_clamp);
    ItemParameters::new(item_id, config.init_a, -logit(p), config.init_c)
}

/// Fits all items of `matrix`. Items everybody (or nobody) answered
/// correctly are left out of EM and imputed as `(1, -+b_max, 0)` with a
/// degenerate flag.
pub fn calibrate(matrix: &ResponseMatrix, config: &CalibrationConfig) -> Result<CalibrationResult> {
    config.validate()?;
    let m = matrix.n_models();
    if m < 2 {
        return Err(Error::Precondition(format!(
            "calibration needs at least 2 respondents, got {m}"
        )));
    }
    let grid = make_grid(config.quadrature_points)?;
    let means = matrix.item_means();
    let mut items: Vec<ItemParameters> = Vec::with_capacity(matrix.n_items());
    let mut active = Vec::new();
    for (i, (&id, &p)) in matrix.item_ids.iter().zip(&means).enumerate() {
        let mut item = initial_parameters(id, p, config);
        if p >= 1.0 {
            item = ItemParameters::new(id, 1.0, -config.b_max, 0.0);
            item.flag = ItemFlag::DegenerateAllCorrect;
        } else if p <= 0.0 {
            item = ItemParameters::new(id, 1.0, config.b_max, 0.0);
            item.flag = ItemFlag::DegenerateAllWrong;
        } else {
            active.push(i);
        }
        items.push(item);
    }
    let mut warnings = Vec::new();
    if m < 30 {
        warnings.push(format!(
            "only {m} respondents; 3PL estimates are unreliable below 30"
        ));
    }
    if active.is_empty() {
        return Ok(CalibrationResult {
            items,
            loglik_trace: Vec::new(),
            converged: true,
            iterations: 0,
            warnings,
        });
    }

    let patterns = Patterns::compress(matrix, &active);
    let q = grid.len();
    let mut current: Vec<ItemParameters> = active.iter().map(|&i| items[i].clone()).collect();
    let mut estep = run_e_step(&patterns, &as_triples(&current), &grid);
    let mut trace = vec![estep.loglik];
    let mut converged = false;
    let mut iterations = 0;
    while iterations < config.max_em_iters {
        iterations += 1;
        current = current
            .par_iter()
            .enumerate()
            .map(|(k, item)| m_step_item(estep.r_bar_item(k, q), &estep.n_bar, &grid, item, config))
            .collect();
        estep = run_e_step(&patterns, &as_triples(&current), &grid);
        let prev = *trace.last().expect("trace is non-empty");
        trace.push(estep.loglik);
        if (estep.loglik - prev).abs() < config.loglik_tol {
            converged = true;
            break;
        }
    }
    if !converged {
        warnings.push(format!("EM stopped after {iterations} iterations without converging"));
    }
    for (k, &i) in active.iter().enumerate() {
        items[i] = current[k].clone();
    }
    Ok(CalibrationResult {
        items,
        loglik_trace: trace,
        converged,
        iterations,
        warnings,
    })
}

/// Calibrations run separately on each fold's columns, recombined in matrix
/// item order without any rescaling between folds.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldCalibration {
    pub items: Vec<ItemParameters>,
    /// `(fold, result)` in ascending fold order.
    pub folds: Vec<(usize, CalibrationResult)>,
}

pub fn calibrate_by_fold(matrix: &ResponseMatrix, config: &CalibrationConfig) -> Result<FoldCalibration> {
    let mut fold_ids: Vec<usize> = matrix.fold_of_item.clone();
    fold_ids.sort_unstable();
    fold_ids.dedup();
    let mut items: Vec<Option<ItemParameters>> = vec![None; matrix.n_items()];
    let mut folds = Vec::with_capacity(fold_ids.len());
    for fold in fold_ids {
        let columns: Vec<usize> = (0..matrix.n_items())
            .filter(|&i| matrix.fold_of_item[i] == fold)
            .collect();
        let result = calibrate(&matrix.select_items(&columns), config)?;
        for (&i, item) in columns.iter().zip(&result.items) {
            items[i] = Some(item.clone());
        }
        folds.push((fold, result));
    }
    Ok(FoldCalibration {
        items: items.into_iter().map(|p| p.expect("every item has a fold")).collect(),
        folds,
    })
}

/// Draws `theta_m ~ N(0, 1)` and Bernoulli responses from the 3PL model.
pub fn simulate_responses(items: &[ItemParameters], respondents: usize, seed: u64) -> Result<ResponseMatrix> {
    if respondents == 0 {
        return Err(Error::Precondition("at least one respondent required".into()));
    }
    let mut rng = rng_from_seed(seed);
    let mut cells = Vec::with_capacity(respondents * items.len());
    for _ in 0..respondents {
        let theta: f64 = rng.sample(StandardNormal);
        for item in items {
            cells.push(u8::from(rng.gen::<f64>() < item.prob(theta)));
        }
    }
    let model_ids = (0..respondents).map(|m| format!("sim-{m:05}")).collect();
    let item_ids = items.iter().map(|p| p.item_id).collect();
    ResponseMatrix::new(model_ids, item_ids, cells, vec![0; items.len()])
}

/// CSV `item_id,discrimination,difficulty,guessing,flag`, floats printed in
/// their shortest round-trip form.
pub fn write_item_parameters(items: &[ItemParameters], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["item_id", "discrimination", "difficulty", "guessing", "flag"])?;
    for p in items {
        w.write_record([
            p.item_id.to_string(),
            p.discrimination.to_string(),
            p.difficulty.to_string(),
            p.guessing.to_string(),
            p.flag.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_item_parameters(source: impl Read) -> Result<Vec<ItemParameters>> {
    let mut r = csv::Reader::from_reader(source);
    let expected = ["item_id", "discrimination", "difficulty", "guessing", "flag"];
    if r.headers()?.iter().map(str::trim).ne(expected) {
        return Err(Error::parse(1, format!("header must be {}", expected.join(","))));
    }
    let mut items = Vec::new();
    for (k, record) in r.records().enumerate() {
        let record = record?;
        let line = k + 2;
        if record.len() != 5 {
            return Err(Error::parse(line, "expected 5 fields"));
        }
        let num = |j: usize| {
            record[j]
                .trim()
                .parse::<f64>()
                .map_err(|_| Error::parse(line, format!("bad number {:?}", &record[j])))
        };
        items.push(ItemParameters {
            item_id: record[0]
                .trim()
                .parse()
                .map_err(|_| Error::parse(line, "bad item id"))?,
            discrimination: num(1)?,
            difficulty: num(2)?,
            guessing: num(3)?,
            flag: record[4].trim().parse()?,
        });
    }
    Ok(items)
}
