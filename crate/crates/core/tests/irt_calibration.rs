use irt_partition::dataset::InstanceId;
use irt_partition::irt::{
    calibrate, e_step, icc_3pl, m_step_item, make_grid, observed_loglik, read_item_parameters,
    simulate_responses, write_item_parameters, CalibrationConfig, ItemFlag, ItemParameters,
    QuadratureGrid,
};
use irt_partition::response::ResponseMatrix;
use irt_partition::rng::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn item(i: u32, a: f64, b: f64, c: f64) -> ItemParameters {
    ItemParameters::new(InstanceId(i), a, b, c)
}

fn matrix(rows: &[Vec<u8>]) -> ResponseMatrix {
    let n = rows[0].len();
    ResponseMatrix::from_rows(
        (0..rows.len()).map(|m| format!("m{m}")).collect(),
        (0..n as u32).map(InstanceId).collect(),
        rows,
    )
    .unwrap()
}

/// Straight product-over-items likelihood, no logs until the end.
fn brute_force_loglik(rows: &[Vec<u8>], items: &[ItemParameters], grid: &QuadratureGrid) -> f64 {
    let mut total = 0.0;
    for row in rows {
        let mut marginal = 0.0;
        for (&theta, &w) in grid.nodes.iter().zip(&grid.weights) {
            let mut lik = w;
            for (x, it) in row.iter().zip(items) {
                let p = icc_3pl(theta, it.discrimination, it.difficulty, it.guessing);
                lik *= if *x == 1 { p } else { 1.0 - p };
            }
            marginal += lik;
        }
        total += marginal.ln();
    }
    total
}

fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (mx, my) = (x.iter().sum::<f64>() / n, y.iter().sum::<f64>() / n);
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    sxy / (sxx * syy).sqrt()
}

fn random_matrix(m: usize, n: usize, seed: u64) -> Vec<Vec<u8>> {
    let mut rng = rng_from_seed(seed);
    (0..m)
        .map(|_| (0..n).map(|_| u8::from(rng.gen::<f64>() < 0.6)).collect())
        .collect()
}

#[test]
fn flat_icc_single_response_is_log_half() {
    let grid = make_grid(21).unwrap();
    let ll = observed_loglik(&matrix(&[vec![1]]), &[item(0, 0.0, 0.0, 0.0)], &grid).unwrap();
    assert!((ll - 0.5f64.ln()).abs() < 1e-12);
}

#[test]
fn identical_models_double_the_loglik() {
    let grid = make_grid(21).unwrap();
    let items = vec![item(0, 1.3, 0.2, 0.1), item(1, 0.7, -1.0, 0.2)];
    let one = observed_loglik(&matrix(&[vec![1, 0]]), &items, &grid).unwrap();
    let two = observed_loglik(&matrix(&[vec![1, 0], vec![1, 0]]), &items, &grid).unwrap();
    assert!((two - 2.0 * one).abs() < 1e-12);
}

#[test]
fn loglik_matches_brute_force_oracle() {
    let grid = make_grid(21).unwrap();
    let rows = vec![vec![1, 0], vec![0, 0], vec![1, 1]];
    let items = vec![item(0, 1.7, -0.4, 0.15), item(1, 0.6, 1.2, 0.05)];
    let ll = observed_loglik(&matrix(&rows), &items, &grid).unwrap();
    assert!((ll - brute_force_loglik(&rows, &items, &grid)).abs() < 1e-10);
}

#[test]
fn flat_iccs_leave_the_prior_unchanged() {
    let grid = make_grid(21).unwrap();
    let items = vec![item(0, 0.0, 0.3, 0.0), item(1, 0.0, -2.0, 0.4)];
    let e = e_step(&matrix(&[vec![1, 0]]), &items, &grid).unwrap();
    for (p, w) in e.posterior_row(0, 21).iter().zip(&grid.weights) {
        assert!((p - w).abs() < 1e-12);
    }
}

#[test]
fn all_correct_respondent_has_positive_posterior_mean() {
    let grid = make_grid(21).unwrap();
    let items: Vec<_> = (0..5).map(|i| item(i, 4.0, 0.0, 0.0)).collect();
    let e = e_step(&matrix(&[vec![1; 5]]), &items, &grid).unwrap();
    let mean: f64 = e.posterior_row(0, 21).iter().zip(&grid.nodes).map(|(p, t)| p * t).sum();
    assert!(mean > 0.5, "{mean}");
}

#[test]
fn two_by_two_posterior_matches_bayes_rule() {
    let grid = make_grid(7).unwrap();
    let rows = vec![vec![1, 0], vec![0, 1]];
    let items = vec![item(0, 1.0, 0.0, 0.2), item(1, 2.0, 0.5, 0.0)];
    let e = e_step(&matrix(&rows), &items, &grid).unwrap();
    for (m, row) in rows.iter().enumerate() {
        let joint: Vec<f64> = grid
            .nodes
            .iter()
            .zip(&grid.weights)
            .map(|(&t, &w)| {
                let mut l = w;
                for (x, it) in row.iter().zip(&items) {
                    let p = icc_3pl(t, it.discrimination, it.difficulty, it.guessing);
                    l *= if *x == 1 { p } else { 1.0 - p };
                }
                l
            })
            .collect();
        let z: f64 = joint.iter().sum();
        for (got, j) in e.posterior_row(m, 7).iter().zip(&joint) {
            assert!((got - j / z).abs() < 1e-12);
        }
    }
    // Expected counts: r for item 0 is model 0's posterior, n is both.
    for q in 0..7 {
        let p0 = e.posterior_row(0, 7)[q];
        let p1 = e.posterior_row(1, 7)[q];
        assert!((e.r_bar_item(0, 7)[q] - p0).abs() < 1e-15);
        assert!((e.r_bar_item(1, 7)[q] - p1).abs() < 1e-15);
        assert!((e.n_bar[q] - (p0 + p1)).abs() < 1e-15);
    }
}

fn expected_counts(truth: &ItemParameters, grid: &QuadratureGrid, m: f64) -> (Vec<f64>, Vec<f64>) {
    let n: Vec<f64> = grid.weights.iter().map(|w| w * m).collect();
    let r = grid
        .nodes
        .iter()
        .zip(&n)
        .map(|(&t, nq)| nq * truth.prob(t))
        .collect();
    (r, n)
}

fn q_objective(r: &[f64], n: &[f64], grid: &QuadratureGrid, p: &ItemParameters) -> f64 {
    grid.nodes
        .iter()
        .zip(r.iter().zip(n))
        .map(|(&t, (r, n))| {
            let pr = p.prob(t).clamp(1e-10, 1.0 - 1e-10);
            r * pr.ln() + (n - r) * (1.0 - pr).ln()
        })
        .sum()
}

#[test]
fn m_step_recovers_generating_parameters() {
    let grid = make_grid(21).unwrap();
    let config = CalibrationConfig::default();
    let truth = item(0, 1.5, 0.5, 0.1);
    let (r, n) = expected_counts(&truth, &grid, 2000.0);
    let fitted = m_step_item(&r, &n, &grid, &item(0, 1.0, 0.0, 0.05), &config);
    let best = q_objective(&r, &n, &grid, &fitted);
    assert!(best >= q_objective(&r, &n, &grid, &truth) - 1e-6);
    for (da, db, dc) in [(0.1, 0.0, 0.0), (0.0, -0.1, 0.0), (0.0, 0.0, 0.03), (-0.2, 0.1, -0.05)] {
        let p = item(0, truth.discrimination + da, truth.difficulty + db, truth.guessing + dc);
        assert!(best >= q_objective(&r, &n, &grid, &p));
    }
    assert!((fitted.discrimination - 1.5).abs() < 0.05, "{fitted:?}");
    assert!((fitted.difficulty - 0.5).abs() < 0.05);
    assert!((fitted.guessing - 0.1).abs() < 0.02);
}

#[test]
fn always_correct_counts_drive_difficulty_to_lower_bound() {
    let grid = make_grid(21).unwrap();
    let config = CalibrationConfig::default();
    let n: Vec<f64> = grid.weights.iter().map(|w| w * 100.0).collect();
    let start = item(0, 1.0, -3.89, 0.05);
    let fitted = m_step_item(&n, &n, &grid, &start, &config);
    assert_eq!(fitted.difficulty, -config.b_max);
    assert_eq!(fitted.flag, ItemFlag::BoundaryClamped);
    assert!(q_objective(&n, &n, &grid, &fitted) >= q_objective(&n, &n, &grid, &start));
}

#[test]
fn single_item_recovery_from_simulation() {
    let truth = vec![item(0, 1.5, 0.5, 0.1)];
    let sim = simulate_responses(&truth, 2000, 11).unwrap();
    // A lone item carries no information about ability, so fit it against
    // the known-ability counts produced by the simulation's generator.
    let grid = make_grid(21).unwrap();
    let mut rng = rng_from_seed(11);
    let mut r = vec![0.0; 21];
    let mut n = vec![0.0; 21];
    for m in 0..2000 {
        let theta: f64 = rng.sample(rand_distr::StandardNormal);
        let _: f64 = rng.gen();
        let q = grid
            .nodes
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - theta).abs().total_cmp(&(b.1 - theta).abs()))
            .unwrap()
            .0;
        n[q] += 1.0;
        r[q] += f64::from(sim.get(m, 0));
    }
    let fitted = m_step_item(&r, &n, &grid, &item(0, 1.0, 0.0, 0.05), &CalibrationConfig::default());
    assert!((fitted.discrimination - 1.5).abs() <= 0.3, "{fitted:?}");
    assert!((fitted.difficulty - 0.5).abs() <= 0.2, "{fitted:?}");
    assert!((fitted.guessing - 0.1).abs() <= 0.08, "{fitted:?}");
}

#[test]
fn simulation_examples() {
    let ones = simulate_responses(&[item(0, 1.0, 0.0, 1.0), item(1, 3.0, 2.0, 1.0)], 50, 1).unwrap();
    assert!(ones.rows().all(|r| r.iter().all(|&c| c == 1)));

    let m = 40_000;
    let flat = simulate_responses(&[item(0, 0.0, 0.0, 0.0)], m, 2).unwrap();
    let mean = flat.item_means()[0];
    let sd = (0.25 / m as f64).sqrt();
    assert!((mean - 0.5).abs() < 3.0 * sd);

    let it = item(0, 1.2, 0.0, 0.2);
    let m = 50_000;
    let sim = simulate_responses(&[it.clone()], m, 3).unwrap();
    let grid = make_grid(41).unwrap();
    let expected: f64 = grid.nodes.iter().zip(&grid.weights).map(|(&t, w)| w * it.prob(t)).sum();
    let sd = (expected * (1.0 - expected) / m as f64).sqrt();
    assert!((sim.item_means()[0] - expected).abs() < 4.0 * sd);

    assert_eq!(simulate_responses(&[it.clone()], 30, 9).unwrap(), simulate_responses(&[it], 30, 9).unwrap());
}

#[test]
fn all_correct_matrix_is_fully_degenerate() {
    let r = calibrate(&matrix(&vec![vec![1; 4]; 12]), &CalibrationConfig::default()).unwrap();
    for p in &r.items {
        assert_eq!(p.flag, ItemFlag::DegenerateAllCorrect);
        assert_eq!((p.discrimination, p.difficulty, p.guessing), (1.0, -6.0, 0.0));
    }
    assert!(r.warnings.iter().any(|w| w.contains("12 respondents")));
    assert!(calibrate(&matrix(&[vec![1, 0]]), &CalibrationConfig::default()).is_err());
}

#[test]
fn mixed_degenerate_items_are_imputed() {
    let rows: Vec<Vec<u8>> = (0..40).map(|m| vec![1, 0, u8::from(m % 3 == 0), u8::from(m % 2 == 0)]).collect();
    let r = calibrate(&matrix(&rows), &CalibrationConfig::default()).unwrap();
    assert_eq!(r.items[0].flag, ItemFlag::DegenerateAllCorrect);
    assert_eq!(r.items[1].flag, ItemFlag::DegenerateAllWrong);
    assert_eq!(r.items[1].difficulty, 6.0);
    assert!(matches!(r.items[2].flag, ItemFlag::Calibrated | ItemFlag::BoundaryClamped));
}

#[test]
fn recovery_on_simulated_population() {
    let mut rng = rng_from_seed(2024);
    let truth: Vec<ItemParameters> = (0..60)
        .map(|i| item(i, rng.gen_range(0.7..2.5), rng.gen_range(-2.0..2.0), rng.gen_range(0.0..0.25)))
        .collect();
    let sim = simulate_responses(&truth, 2000, 7).unwrap();
    let start = std::time::Instant::now();
    let fit = calibrate(&sim, &CalibrationConfig::default()).unwrap();
    let elapsed = start.elapsed();
    let col = |f: fn(&ItemParameters) -> f64, xs: &[ItemParameters]| xs.iter().map(f).collect::<Vec<_>>();
    let rb = pearson(&col(|p| p.difficulty, &truth), &col(|p| p.difficulty, &fit.items));
    let ra = pearson(&col(|p| p.discrimination, &truth), &col(|p| p.discrimination, &fit.items));
    let mae_c = truth.iter().zip(&fit.items).map(|(t, f)| (t.guessing - f.guessing).abs()).sum::<f64>() / 60.0;
    eprintln!("r_b={rb:.4} r_a={ra:.4} mae_c={mae_c:.4} iters={} converged={} {elapsed:?}", fit.iterations, fit.converged);
    assert!(rb >= 0.9);
    assert!(ra >= 0.7);
    assert!(mae_c <= 0.08);
    assert!(fit.loglik_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
}

#[test]
fn row_permutation_does_not_change_estimates() {
    let rows = random_matrix(60, 12, 4);
    let mut reversed = rows.clone();
    reversed.reverse();
    let config = CalibrationConfig::default();
    let a = calibrate(&matrix(&rows), &config).unwrap();
    let b = calibrate(&matrix(&reversed), &config).unwrap();
    assert_eq!(a.items, b.items);
    assert_eq!(a.loglik_trace, b.loglik_trace);
}

#[test]
fn item_parameter_csv_round_trips() {
    let items = vec![
        item(0, 1.0 / 3.0, -0.1, 0.0),
        ItemParameters {
            flag: ItemFlag::BoundaryClamped,
            ..item(7, 50.0, -6.0, 0.123456789012345)
        },
    ];
    let mut buf = Vec::new();
    write_item_parameters(&items, &mut buf).unwrap();
    assert!(String::from_utf8_lossy(&buf).starts_with("item_id,discrimination,difficulty,guessing,flag\n"));
    assert_eq!(read_item_parameters(buf.as_slice()).unwrap(), items);
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 12, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn em_trace_is_monotone(seed in any::<u64>(), m in 20usize..60, n in 3usize..15) {
        let rows = random_matrix(m, n, seed);
        let config = CalibrationConfig { max_em_iters: 60, ..Default::default() };
        let r = calibrate(&matrix(&rows), &config).unwrap();
        for w in r.loglik_trace.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-8, "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn posterior_rows_are_normalized(seed in any::<u64>()) {
        let rows = random_matrix(15, 6, seed);
        let mut rng = rng_from_seed(seed ^ 1);
        let items: Vec<_> = (0..6)
            .map(|i| item(i, rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..0.9)))
            .collect();
        let grid = make_grid(21).unwrap();
        let e = e_step(&matrix(&rows), &items, &grid).unwrap();
        for m in 0..15 {
            prop_assert!((e.posterior_row(m, 21).iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
        prop_assert!((e.n_bar.iter().sum::<f64>() - 15.0).abs() < 1e-8);
        for i in 0..6 {
            for q in 0..21 {
                prop_assert!(e.r_bar_item(i, 21)[q] <= e.n_bar[q] + 1e-12);
            }
        }
    }

    #[test]
    fn icc_is_bounded_and_increasing(a in 0.01f64..10.0, b in -5.0f64..5.0, c in 0.0f64..1.0, t in -6.0f64..6.0) {
        let p = icc_3pl(t, a, b, c);
        prop_assert!(p >= c - 1e-15 && p <= 1.0);
        prop_assert!(icc_3pl(t + 0.5, a, b, c) >= p);
    }

    #[test]
    fn m_step_never_decreases_objective(seed in any::<u64>()) {
        let grid = make_grid(21).unwrap();
        let mut rng = rng_from_seed(seed);
        let n: Vec<f64> = grid.weights.iter().map(|w| w * rng.gen_range(10.0..500.0)).collect();
        let r: Vec<f64> = n.iter().map(|nq| nq * rng.gen::<f64>()).collect();
        let start = item(0, rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0), rng.gen_range(0.0..0.5));
        let config = CalibrationConfig::default();
        let fitted = m_step_item(&r, &n, &grid, &start, &config);
        prop_assert!(q_objective(&r, &n, &grid, &fitted) >= q_objective(&r, &n, &grid, &start) - 1e-9);
        prop_assert!(fitted.discrimination.abs() <= 50.0 && fitted.difficulty.abs() <= 6.0);
        prop_assert!((0.0..=0.95).contains(&fitted.guessing));
    }
}
