use ebsde::fixed_point::{picard_run, SchemeConfig, SamplePolicy, VectorField};
use ebsde::grid::{Grid, WeightFunction};
use ebsde::ou_model::OuModel;
use ebsde::problem::{Benchmark, Driver, ExactGradient};

fn benchmark(gamma: f64, dim: usize) -> (OuModel, Driver) {
    let b = Benchmark::new(gamma, 2.0, dim).unwrap();
    let (a, s) = b.model_matrices();
    (OuModel::new(a, s).unwrap(), b.driver())
}

fn exact(dim: usize) -> ExactGradient {
    Benchmark::exact_field(dim)
}

fn std_dev(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
}

#[test]
fn worker_count_does_not_change_iterates() {
    let (model, driver) = benchmark(1.0, 2);
    let grid = Grid::new(2, 0.5, 2).unwrap();
    let mut cfg = SchemeConfig::new(1.8, 3, 500, 42);
    let seq = picard_run(&model, &grid, &driver, &cfg, None).unwrap();
    for workers in [2, 4] {
        cfg.workers = workers;
        let par = picard_run(&model, &grid, &driver, &cfg, None).unwrap();
        for (a, b) in seq.history.iter().zip(&par.history) {
            let same = a.values().iter().zip(b.values()).all(|(x, y)| x.to_bits() == y.to_bits());
            assert!(same, "workers = {workers}");
        }
    }
}

#[test]
fn different_seeds_differ() {
    let (model, driver) = benchmark(1.0, 1);
    let grid = Grid::new(1, 0.5, 2).unwrap();
    let a = picard_run(&model, &grid, &driver, &SchemeConfig::new(1.8, 1, 100, 1), None).unwrap();
    let b = picard_run(&model, &grid, &driver, &SchemeConfig::new(1.8, 1, 100, 2), None).unwrap();
    assert!(a.last().max_distance(b.last()) > 0.0);
}

#[test]
fn zero_driver_and_zero_ball_give_zero_iterates() {
    let (model, driver) = benchmark(1.0, 2);
    let grid = Grid::new(2, 0.5, 2).unwrap();
    let cfg = SchemeConfig::new(1.8, 3, 50, 3);
    let run = picard_run(&model, &grid, &Driver::zero(), &cfg, None).unwrap();
    assert!(run.history.iter().all(|gf| gf.values().iter().all(|&v| v == 0.0)));
    let clipped = SchemeConfig {
        truncation: Some(0.0),
        ..cfg
    };
    let run = picard_run(&model, &grid, &driver, &clipped, None).unwrap();
    assert!(run.history.iter().all(|gf| gf.values().iter().all(|&v| v == 0.0)));
}

#[test]
fn small_gamma_successive_differences_decay() {
    let (model, driver) = benchmark(0.2, 1);
    let grid = Grid::new(1, 0.25, 8).unwrap();
    let mut cfg = SchemeConfig::new(1.8, 5, 20_000, 11);
    cfg.common_random_numbers = true;
    let run = picard_run(&model, &grid, &driver, &cfg, Some(&exact(1))).unwrap();
    let diffs: Vec<f64> = run.report.records.iter().map(|r| r.successive_diff).collect();
    for w in diffs.windows(2) {
        assert!(w[1] < w[0], "{diffs:?}");
    }
    assert!(diffs[4] < 0.05 * diffs[0], "{diffs:?}");
}

#[test]
fn interior_errors_are_ordered() {
    let (model, driver) = benchmark(1.0, 1);
    let grid = Grid::new(1, 0.4, 5).unwrap();
    let run = picard_run(&model, &grid, &driver, &SchemeConfig::new(1.8, 3, 2000, 5), Some(&exact(1))).unwrap();
    for r in &run.report.records {
        let s: Vec<f64> = r.sup_err.iter().map(|e| e.unwrap()).collect();
        assert!(s[2] <= s[1] && s[1] <= s[0]);
        for (mean, sup) in r.mean_err.iter().zip(&s) {
            assert!(mean.unwrap() <= *sup);
        }
    }
}

/// Std over `seeds` runs of the sup-node error after `n` sweeps.
fn sup_error_spread(grid: &Grid, n: usize, m: usize, seeds: u64) -> f64 {
    let (model, driver) = benchmark(1.0, 1);
    let v = exact(1);
    let errs: Vec<f64> = (0..seeds)
        .map(|seed| {
            let cfg = SchemeConfig::new(1.8, n, m, 1000 + seed);
            let run = picard_run(&model, grid, &driver, &cfg, Some(&v as &dyn VectorField)).unwrap();
            run.report.records[n - 1].sup_err[0].unwrap()
        })
        .collect();
    std_dev(&errs)
}

#[test]
fn error_spread_scales_like_inverse_sqrt_m() {
    let grid = Grid::new(1, 0.4, 5).unwrap();
    let s: Vec<f64> = [1_000, 4_000, 16_000].iter().map(|&m| sup_error_spread(&grid, 3, m, 30)).collect();
    for w in s.windows(2) {
        let ratio = w[0] / w[1];
        assert!((2.0 / 1.5..=2.0 * 1.5).contains(&ratio), "spreads {s:?}");
    }
}

#[test]
fn single_node_spread_scales_like_inverse_sqrt_m() {
    // the origin estimate is unbiased, so the error is pure noise
    let grid = Grid::new(1, 0.5, 0).unwrap();
    let s: Vec<f64> = [1_000, 4_000, 16_000].iter().map(|&m| sup_error_spread(&grid, 1, m, 100)).collect();
    for w in s.windows(2) {
        let ratio = w[0] / w[1];
        assert!((1.8..=2.2).contains(&ratio), "spreads {s:?}");
    }
}

#[test]
fn weighted_sample_policy_runs() {
    let (model, driver) = benchmark(1.0, 1);
    let grid = Grid::new(1, 0.5, 4).unwrap();
    let mut cfg = SchemeConfig::new(1.8, 2, 1, 9);
    cfg.sample_policy = SamplePolicy::Weighted {
        m_tilde: 500.0,
        rho: WeightFunction::Polynomial { alpha: 1.0, beta: 1.0 },
    };
    let run = picard_run(&model, &grid, &driver, &cfg, Some(&exact(1))).unwrap();
    let counts = &run.report.sample_counts;
    assert_eq!(counts[grid.origin()], 500);
    assert!(counts.iter().all(|&m| m == 500));
    assert!(run.report.records[1].sup_err[1].unwrap() < 0.3);
}
