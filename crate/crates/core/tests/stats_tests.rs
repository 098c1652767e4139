use irt_partition::stats::{
    friedman, nemenyi, nemenyi_from_ranks, rank_block, run_tests, studentized_range_sf, ScoreTable,
};
use proptest::prelude::*;
use proptest::strategy::ValueTree;
use statrs::distribution::{ContinuousCDF, Normal};

fn table(scores: Vec<Vec<f64>>) -> ScoreTable {
    let k = scores[0].len();
    let n = scores.len();
    ScoreTable::new(
        (0..n).map(|i| format!("b{i}")).collect(),
        (0..k).map(|j| format!("t{j}")).collect(),
        scores,
    )
    .unwrap()
}

/// Average rank by counting: 1 + #strictly better + (#equal - 1) / 2, held as
/// twice the rank so it stays an integer.
fn twice_rank(row: &[f64], j: usize) -> i128 {
    let better = row.iter().filter(|&&v| v > row[j]).count() as i128;
    let equal = row.iter().filter(|&&v| v == row[j]).count() as i128;
    2 + 2 * better + equal - 1
}

/// Brute-force tie-corrected Friedman statistic, evaluated in exact integer
/// arithmetic and rounded once:
/// `(12 sum R^2 / (n k (k+1)) - 3 n (k+1)) / (1 - T / (n k (k^2-1)))`.
fn friedman_oracle(scores: &[Vec<f64>]) -> f64 {
    let n = scores.len() as i128;
    let k = scores[0].len() as i128;
    let mut twice_sums = vec![0i128; k as usize];
    let mut ties = 0i128;
    for row in scores {
        for (j, s) in twice_sums.iter_mut().enumerate() {
            *s += twice_rank(row, j);
        }
        let mut seen: Vec<f64> = Vec::new();
        for &v in row {
            if !seen.contains(&v) {
                seen.push(v);
                let t = row.iter().filter(|&&w| w == v).count() as i128;
                ties += t * t * t - t;
            }
        }
    }
    // Multiply numerator and denominator through by 4 n k (k+1) (k^2-1) / (k+1).
    let sum_sq_4: i128 = twice_sums.iter().map(|s| s * s).sum();
    let num = (k - 1) * (3 * sum_sq_4 - 3 * n * n * k * (k + 1) * (k + 1));
    let den = n * k * (k * k - 1) - ties;
    if den <= 0 {
        0.0
    } else {
        num.max(0) as f64 / den as f64
    }
}

#[test]
fn friedman_matches_brute_force_on_random_tables_exactly() {
    let mut runner = proptest::test_runner::TestRunner::deterministic();
    let strategy = (2usize..8, 2usize..13).prop_flat_map(|(n, k)| {
        prop::collection::vec(prop::collection::vec(0u8..5, k), n)
    });
    for _ in 0..100 {
        let ints = strategy.new_tree(&mut runner).unwrap().current();
        let scores: Vec<Vec<f64>> = ints.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let got = friedman(&table(scores.clone())).unwrap();
        assert_eq!(got.statistic, friedman_oracle(&scores), "{scores:?}");
    }
}

#[test]
fn perfectly_ordered_table_gives_eight() {
    let scores = vec![vec![3.0, 2.0, 1.0]; 4];
    let f = friedman(&table(scores)).unwrap();
    assert_eq!(f.statistic, 8.0);
    assert!((f.p_value - (-4.0f64).exp()).abs() < 1e-12);
    assert!((f.p_value - 0.0183).abs() < 1e-4);
    assert_eq!(f.mean_ranks, vec![1.0, 2.0, 3.0]);
}

#[test]
fn all_ties_give_zero_statistic_and_unit_p() {
    let f = friedman(&table(vec![vec![0.5; 4]; 6])).unwrap();
    assert_eq!(f.statistic, 0.0);
    assert_eq!(f.p_value, 1.0);
}

#[test]
fn studentized_range_with_two_groups_is_a_normal_tail() {
    let normal = Normal::new(0.0, 1.0).unwrap();
    for q in [0.1, 0.5, 1.0, 2.0, 2.77, 3.5, 5.0] {
        let expected = 2.0 * normal.sf(q / std::f64::consts::SQRT_2);
        assert!((studentized_range_sf(q, 2) - expected).abs() < 1e-9, "q={q}");
    }
}

#[test]
fn studentized_range_critical_value_for_three_groups() {
    assert!((studentized_range_sf(3.314, 3) - 0.05).abs() < 0.003);
}

#[test]
fn nemenyi_example_pair() {
    // Mean ranks 1 and 3 over 4 blocks, k = 3: q = 2 / sqrt(0.5) = 2.828.
    let p = nemenyi_from_ranks(&[1.0, 2.0, 3.0], 4);
    assert!((p[0][2] - 0.012988).abs() < 1e-5, "{}", p[0][2]);
}

#[test]
fn nemenyi_needs_three_treatments() {
    assert!(nemenyi(&table(vec![vec![1.0, 0.0]; 5])).is_err());
    let r = run_tests(&table(vec![vec![1.0, 0.0]; 5]), "x").unwrap();
    assert!(r.nemenyi_p.is_empty());
}

proptest! {
    #[test]
    fn rank_sums_are_fixed(rows in prop::collection::vec(prop::collection::vec(0u8..4, 5), 1..10)) {
        for row in &rows {
            let r: Vec<f64> = row.iter().map(|&v| v as f64).collect();
            let sum: f64 = rank_block(&r).iter().sum();
            prop_assert_eq!(sum, 15.0);
        }
    }

    #[test]
    fn friedman_is_permutation_equivariant(
        rows in prop::collection::vec(prop::collection::vec(0u8..6, 4), 2..10),
        shift in 0usize..4,
    ) {
        let scores: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let permuted: Vec<Vec<f64>> = scores.iter().map(|r| {
            let mut r = r.clone();
            r.rotate_left(shift);
            r
        }).collect();
        let a = friedman(&table(scores)).unwrap();
        let b = friedman(&table(permuted)).unwrap();
        prop_assert_eq!(a.statistic, b.statistic);
        let mut rotated = a.mean_ranks.clone();
        rotated.rotate_left(shift);
        prop_assert_eq!(rotated, b.mean_ranks);
    }

    #[test]
    fn friedman_ignores_monotone_transforms(
        rows in prop::collection::vec(prop::collection::vec(0u8..6, 5), 2..10),
    ) {
        let scores: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|&v| v as f64).collect()).collect();
        let transformed: Vec<Vec<f64>> = scores.iter().map(|r| r.iter().map(|v| (v * 0.3).exp() - 7.0).collect()).collect();
        let a = friedman(&table(scores)).unwrap();
        let b = friedman(&table(transformed)).unwrap();
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn nemenyi_is_symmetric_with_unit_diagonal(ranks in prop::collection::vec(1.0f64..6.0, 3..7), n in 1usize..30) {
        let p = nemenyi_from_ranks(&ranks, n);
        for i in 0..ranks.len() {
            prop_assert_eq!(p[i][i], 1.0);
            for j in 0..ranks.len() {
                prop_assert_eq!(p[i][j], p[j][i]);
                prop_assert!((0.0..=1.0).contains(&p[i][j]));
            }
        }
    }

    #[test]
    fn nemenyi_p_falls_as_rank_gap_grows(gap in 0.05f64..2.0, extra in 0.05f64..1.0, n in 2usize..30) {
        let near = nemenyi_from_ranks(&[2.0, 2.0 + gap, 3.0], n)[0][1];
        let far = nemenyi_from_ranks(&[2.0, 2.0 + gap + extra, 3.0], n)[0][1];
        prop_assert!(far <= near + 1e-12);
    }
}
