//! Friedman rank test and Nemenyi post-hoc comparisons.

use std::io::Write;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Scores of `treatments` (columns) measured on the same `blocks` (rows).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScoreTable {
    pub blocks: Vec<String>,
    pub treatments: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreTable {
    pub fn new(blocks: Vec<String>, treatments: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self> {
        if scores.len() != blocks.len() {
            return Err(Error::DimensionMismatch {
                expected: blocks.len(),
                got: scores.len(),
            });
        }
        if let Some(row) = scores.iter().find(|r| r.len() != treatments.len()) {
            return Err(Error::DimensionMismatch {
                expected: treatments.len(),
                got: row.len(),
            });
        }
        if scores.iter().flatten().any(|v| v.is_nan()) {
            return Err(Error::InvalidData("score table has missing (NaN) cells".into()));
        }
        Ok(Self {
            blocks,
            treatments,
            scores,
        })
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn n_treatments(&self) -> usize {
        self.treatments.len()
    }
}

/// Ranks within one block, 1 = highest score, ties sharing the average rank.
pub fn rank_block(scores: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut ranks = vec![0.0; scores.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // positions start..end hold ranks start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for &j in &order[start..end] {
            ranks[j] = avg;
        }
        start = end;
    }
    ranks
}

/// Sizes of the tie groups within one block.
fn tie_groups(scores: &[f64]) -> Vec<usize> {
    let mut sorted = scores.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut start = 0;
    while start < sorted.len() {
        let mut end = start + 1;
        while end < sorted.len() && sorted[end] == sorted[start] {
            end += 1;
        }
        groups.push(end - start);
        start = end;
    }
    groups
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub p_value: f64,
    pub mean_ranks: Vec<f64>,
}

/// Friedman chi-square with the usual tie correction, referred to the
/// chi-square distribution with `k - 1` degrees of freedom. A table whose
/// blocks are entirely tied has statistic 0 and p 1.
pub fn friedman(table: &ScoreTable) -> Result<FriedmanResult> {
    let (n, k) = (table.n_blocks(), table.n_treatments());
    if k < 2 || n < 2 {
        return Err(Error::Precondition(format!(
            "Friedman test needs at least 2 treatments and 2 blocks, got {k} and {n}"
        )));
    }
    // Average ranks are half-integers, so twice the rank sums are exact
    // integers and the tie-corrected statistic is a ratio of integers:
    // with S = sum_j (2 R_j)^2 and T = sum (t^3 - t) over tie groups,
    //   chi2 = (k - 1)(3 S - 3 n^2 k (k + 1)^2) / (n k (k^2 - 1) - T).
    let mut twice_rank_sums = vec![0i128; k];
    let mut tie_total = 0i128;
    for row in &table.scores {
        for (s, r) in twice_rank_sums.iter_mut().zip(rank_block(row)) {
            *s += (2.0 * r) as i128;
        }
        tie_total += tie_groups(row).iter().map(|&t| (t * t * t - t) as i128).sum::<i128>();
    }
    let mean_ranks = twice_rank_sums.iter().map(|&r| r as f64 / (2 * n) as f64).collect();
    let (ni, ki) = (n as i128, k as i128);
    let denominator = ni * ki * (ki * ki - 1) - tie_total;
    if denominator <= 0 {
        return Ok(FriedmanResult {
            statistic: 0.0,
            p_value: 1.0,
            mean_ranks,
        });
    }
    let s: i128 = twice_rank_sums.iter().map(|r| r * r).sum();
    let numerator = (ki - 1) * (3 * s - 3 * ni * ni * ki * (ki + 1) * (ki + 1));
    let statistic = (numerator.max(0) as f64) / denominator as f64;
    let kf = k as f64;
    let p_value = ChiSquared::new(kf - 1.0)
        .map_err(|e| Error::Precondition(e.to_string()))?
        .sf(statistic)
        .clamp(0.0, 1.0);
    Ok(FriedmanResult {
        statistic,
        p_value,
        mean_ranks,
    })
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

fn normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn step(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            left + right + delta / 15.0
        } else {
            step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1)
                + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
        }
    }
    let (fa, fb) = (f(a), f(b));
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Upper tail of the range of `k` independent standard normals (the
/// studentized range with infinite degrees of freedom):
///
/// ```text
/// P(R > q) = 1 - k * integral phi(z) [Phi(z) - Phi(z - q)]^(k-1) dz
/// ```
pub fn studentized_range_sf(q: f64, k: usize) -> f64 {
    if q <= 0.0 || k < 2 {
        return 1.0;
    }
    let km1 = (k - 1) as i32;
    let integrand = |z: f64| normal_pdf(z) * (normal_cdf(z) - normal_cdf(z - q)).powi(km1);
    // phi vanishes (< 1e-21) outside [-10, 10 + q]; integrate in pieces so
    // the adaptive rule sees the peak.
    let mut cdf = 0.0;
    let mut lo = -10.0;
    while lo < 10.0 + q {
        let hi = (lo + 2.0).min(10.0 + q);
        cdf += adaptive_simpson(&integrand, lo, hi, 1e-13);
        lo = hi;
    }
    (1.0 - k as f64 * cdf).clamp(0.0, 1.0)
}

/// Pairwise Nemenyi p-values from mean ranks: the statistic
/// `|R_i - R_j| / sqrt(k (k + 1) / (6 n))`, times `sqrt(2)`, is referred to
/// the studentized range with `k` groups and infinite degrees of freedom.
pub fn nemenyi_from_ranks(mean_ranks: &[f64], n_blocks: usize) -> Vec<Vec<f64>> {
    let k = mean_ranks.len();
    let se = ((k * (k + 1)) as f64 / (6.0 * n_blocks as f64)).sqrt();
    let mut p = vec![vec![1.0; k]; k];
    for i in 0..k {
        for j in i + 1..k {
            let q = (mean_ranks[i] - mean_ranks[j]).abs() / se;
            let v = studentized_range_sf(q * std::f64::consts::SQRT_2, k);
            p[i][j] = v;
            p[j][i] = v;
        }
    }
    p
}

pub fn nemenyi(table: &ScoreTable) -> Result<Vec<Vec<f64>>> {
    if table.n_treatments() < 3 {
        return Err(Error::Precondition(format!(
            "Nemenyi test needs at least 3 treatments, got {}",
            table.n_treatments()
        )));
    }
    let f = friedman(table)?;
    Ok(nemenyi_from_ranks(&f.mean_ranks, table.n_blocks()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// Which score was compared (e.g. `test_f1`).
    pub score: String,
    pub treatments: Vec<String>,
    pub n_blocks: usize,
    pub friedman_statistic: f64,
    pub friedman_p: f64,
    /// Always `chi-square` (no Iman-Davenport refinement).
    pub friedman_reference: String,
    pub mean_ranks: Vec<f64>,
    pub nemenyi_p: Vec<Vec<f64>>,
}

pub fn run_tests(table: &ScoreTable, score: &str) -> Result<TestResult> {
    let f = friedman(table)?;
    let nemenyi_p = if table.n_treatments() >= 3 {
        nemenyi_from_ranks(&f.mean_ranks, table.n_blocks())
    } else {
        Vec::new()
    };
    Ok(TestResult {
        score: score.to_string(),
        treatments: table.treatments.clone(),
        n_blocks: table.n_blocks(),
        friedman_statistic: f.statistic,
        friedman_p: f.p_value,
        friedman_reference: "chi-square".into(),
        mean_ranks: f.mean_ranks,
        nemenyi_p,
    })
}

/// k x k matrix with strategy names as header row and first column.
pub fn write_nemenyi_csv(treatments: &[String], p: &[Vec<f64>], sink: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    let mut header = vec!["strategy".to_string()];
    header.extend(treatments.iter().cloned());
    w.write_record(&header)?;
    for (name, row) in treatments.iter().zip(p) {
        let mut record = vec![name.clone()];
        record.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
