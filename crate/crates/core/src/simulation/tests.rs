use super::*;
use rand::{Rng, SeedableRng};
use rand_distr::StandardNormal;

fn small_plan(scenario: ScenarioSpec) -> ExperimentPlan {
    let mut plan = ExperimentPlan::new(scenario);
    plan.sample_sizes = vec![400];
    plan.nsr_levels = vec![0.1];
    plan.replications = 10;
    plan.master_seed = 11;
    plan
}

#[test]
fn mise_trivial_cases() {
    let grid: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let a: Vec<f64> = grid.iter().map(|x| x.sin()).collect();
    assert_eq!(mise(&a, &a, &grid).unwrap(), 0.0);
    let b: Vec<f64> = a.iter().map(|v| v + 0.3).collect();
    assert!((mise(&b, &a, &grid).unwrap() - 0.09).abs() < 1e-15);
    assert!(matches!(mise(&a[1..], &a, &grid), Err(Error::LengthMismatch(_))));
}

#[test]
fn mise_matches_weighted_sum() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let mut grid = vec![0.0];
    for _ in 0..200 {
        let step: f64 = rng.random_range(0.001..0.05);
        grid.push(grid.last().unwrap() + step);
    }
    let a: Vec<f64> = grid.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
    let b: Vec<f64> = grid.iter().map(|_| rng.random_range(-2.0..2.0)).collect();
    // Trapezoid weights: half the neighbouring spacings at each node.
    let m = grid.len();
    let oracle: f64 = (0..m)
        .map(|j| {
            let left = if j > 0 { grid[j] - grid[j - 1] } else { 0.0 };
            let right = if j + 1 < m { grid[j + 1] - grid[j] } else { 0.0 };
            0.5 * (left + right) * (a[j] - b[j]).powi(2)
        })
        .sum();
    assert!((mise(&a, &b, &grid).unwrap() - oracle).abs() < 1e-12);
}

#[test]
fn percentile_interpolates() {
    let v = [5.0, 1.0, 3.0, 2.0, 4.0, f64::NAN];
    assert_eq!(percentile(&v, 0.0), 1.0);
    assert_eq!(percentile(&v, 1.0), 5.0);
    assert_eq!(percentile(&v, 0.5), 3.0);
    assert!((percentile(&v, 0.05) - 1.2).abs() < 1e-15);
    assert!(percentile(&[], 0.5).is_nan());
}

#[test]
fn ks_distance_small_sample() {
    // Sorted {-1, 0, 1}: D = max over i of max(i/3 - Φ, Φ - (i-1)/3).
    let phi1 = standard_normal_cdf(1.0);
    let want = [1.0 / 3.0 - (1.0 - phi1), 0.5 - 1.0 / 3.0, 2.0 / 3.0 - 0.5, phi1 - 2.0 / 3.0, 1.0 - phi1]
        .iter()
        .copied()
        .fold(0.0, f64::max);
    let got = ks_distance_normal(&[1.0, -1.0, 0.0]).unwrap();
    assert!((got - want).abs() < 1e-15);
    assert!(ks_distance_normal(&[]).is_err());
    assert!(ks_distance_normal(&[f64::NAN]).is_err());
}

#[test]
fn ks_of_normal_draws_below_critical_value() {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2024);
    let m = 2000;
    let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
    assert!(ks_distance_normal(&z).unwrap() < 1.36 / (m as f64).sqrt());
    let shifted: Vec<f64> = z.iter().map(|v| v + 0.5).collect();
    assert!(ks_distance_normal(&shifted).unwrap() > 1.63 / (m as f64).sqrt());
}

#[test]
fn constant_replications_are_degenerate() {
    let l = vec![0.7; 200];
    assert!(matches!(standardize_empirical(&l), Err(Error::Degenerate(_))));
    let s2 = vec![0.01; 200];
    let h = vec![0.3; 200];
    assert!(matches!(standardize_plugin(&l, &s2, 1000, &h, 2), Err(Error::Degenerate(_))));
    let spread: Vec<f64> = (0..200).map(|i| i as f64).collect();
    assert!(matches!(
        standardize_plugin(&spread, &vec![-1.0; 200], 1000, &h, 2),
        Err(Error::Degenerate(_))
    ));
}

#[test]
fn plugin_standardization_scale() {
    let l = [1.0, 2.0, 3.0];
    let s = standardize_plugin(&l, &[4.0, 4.0, 4.0], 100, &[0.5, 0.5, 0.5], 1).unwrap();
    // √(100 · 0.25) · (l - 2) / 2
    assert_eq!(s, vec![-2.5, 0.0, 2.5]);
}

#[test]
fn plan_validation() {
    let mut plan = ExperimentPlan::new(ScenarioSpec::weibull(1.0, 1.0).unwrap());
    assert!(plan.validate().is_ok());
    plan.replications = 0;
    assert!(plan.validate().is_err());
    plan.replications = 5;
    plan.sample_sizes = vec![9];
    assert!(plan.validate().is_err());
    plan.sample_sizes = vec![100];
    plan.x0 = 7.0;
    assert!(plan.validate().is_err());
    plan.x0 = 0.5;
    plan.bandwidth_rule = BandwidthRule::Sweep(vec![]);
    assert!(plan.validate().is_err());
    plan.bandwidth_rule = BandwidthRule::Fixed(-0.1);
    assert!(plan.validate().is_err());
}

#[test]
fn coverage_accounting_and_granularity() {
    let mut plan = small_plan(ScenarioSpec::lognormal_ma(Default::default()));
    plan.bandwidth_rule = BandwidthRule::Sweep(vec![0.2, 0.35]);
    let report = run_coverage_experiment(&plan).unwrap();
    assert_eq!(report.cells.len(), 2);
    for c in &report.cells {
        assert_eq!(c.contained + c.missed + c.undefined, plan.replications);
        let tenths = c.cp * 10.0;
        assert!((tenths - tenths.round()).abs() < 1e-12);
        let lo = c.coverage_at(0.90).unwrap();
        let hi = c.coverage_at(0.99).unwrap();
        assert!(hi >= lo);
        assert!((c.coverage_at(plan.confidence_level).unwrap() - c.cp).abs() < 1e-15);
    }
    // Same replications across the sweep.
    let seeds = |i: usize| report.cells[i].replications.iter().map(|r| r.seed).collect::<Vec<_>>();
    assert_eq!(seeds(0), seeds(1));
}

#[test]
fn coverage_needs_truth() {
    let plan = small_plan(ScenarioSpec::ar1(0.3).unwrap());
    assert!(matches!(run_coverage_experiment(&plan), Err(Error::NoAnalyticTruth(_))));
}

#[test]
fn reports_are_reproducible() {
    let mut plan = small_plan(ScenarioSpec::weibull(1.5, 1.0).unwrap());
    plan.replications = 6;
    let a = run_curve_experiment(&plan).unwrap();
    let b = run_curve_experiment(&plan).unwrap();
    assert_eq!(format!("{:?}", a.rows()), format!("{:?}", b.rows()));
    assert_eq!(format!("{:?}", a.cells[0].curves), format!("{:?}", b.cells[0].curves));
    plan.master_seed += 1;
    let c = run_curve_experiment(&plan).unwrap();
    assert_ne!(format!("{:?}", a.cells[0].curves), format!("{:?}", c.cells[0].curves));
}

#[test]
fn noiseless_curves_match_plain_kde_hazard() {
    let mut plan = small_plan(ScenarioSpec::weibull(1.0, 1.0).unwrap());
    plan.nsr_levels = vec![0.0];
    plan.replications = 3;
    plan.bandwidth_rule = BandwidthRule::Fixed(0.25);
    let report = run_curve_experiment(&plan).unwrap();
    let cell = &report.cells[0];
    for (rep, curve) in cell.curves.iter().enumerate() {
        let seed = plan.seed(0, 0, rep);
        let y = draw_sample(&plan.scenario, 400, 0.0, seed).unwrap();
        let kernel = SmoothKernel::<f64>::fan();
        let config = EstimatorConfig::new(0.25).with_grid(plan.grid.clone());
        // g_n and G_n under a strong Laplace model are plain-kernel sums.
        let other = DeconvolutionEstimator::new(&kernel, &ErrorModel::laplace(0.5).unwrap(), config).unwrap();
        let sums = other.kernel_sums(y.observations()).unwrap();
        let curve = curve.as_ref().unwrap();
        for j in 0..plan.grid.len() {
            let plain = sums.observed_density[j] / (1.0 - sums.observed_cdf[j].min(1.0 - 1e-3));
            assert!((curve[j] - plain).abs() < 1e-3, "x={}: {} vs {plain}", plan.grid[j], curve[j]);
        }
    }
}

#[test]
fn curve_summary_statistics() {
    let mut plan = small_plan(ScenarioSpec::weibull(1.0, 1.0).unwrap());
    plan.replications = 8;
    let report = run_curve_experiment(&plan).unwrap();
    let c = &report.cells[0];
    assert!(!c.failed);
    assert_eq!(c.sup_errors.len(), 8);
    let j = 100;
    let column: Vec<f64> = c.curves.iter().map(|v| v.as_ref().unwrap()[j]).collect();
    assert!((c.mean_curve[j] - mean(&column)).abs() < 1e-14);
    assert!(c.p05[j] <= c.mean_curve[j] && c.mean_curve[j] <= c.p95[j]);
    assert!(c.truth.as_ref().unwrap().iter().all(|&v| (v - 1.0).abs() < 1e-15));
    let window: Vec<usize> = (0..plan.grid.len()).filter(|&k| plan.grid[k] >= 0.2 && plan.grid[k] <= 3.0).collect();
    let curve0 = c.curves[0].as_ref().unwrap();
    let sup0 = window.iter().map(|&k| (curve0[k] - 1.0).abs()).fold(0.0, f64::max);
    assert_eq!(c.sup_errors[0], sup0);
}

#[test]
fn asymptotic_mode_curves_keep_partial_results() {
    let mut plan = small_plan(ScenarioSpec::weibull(1.5, 1.0).unwrap());
    plan.replications = 3;
    plan.hazard_mode = HazardMode::Asymptotic;
    let report = run_curve_experiment(&plan).unwrap();
    let curve = report.cells[0].curves[0].as_ref().unwrap();
    assert!(curve[100].is_finite());
    assert!(curve.last().unwrap().is_nan());
}

#[test]
fn normality_needs_enough_replications() {
    let plan = small_plan(ScenarioSpec::weibull(1.0, 1.0).unwrap());
    assert!(run_normality_experiment(&plan).is_err());
}

#[test]
fn normality_cell_outputs() {
    let mut plan = small_plan(ScenarioSpec::lognormal_ma(Default::default()));
    plan.replications = 100;
    plan.bandwidth_rule = BandwidthRule::Fixed(0.3);
    let report = run_normality_experiment(&plan).unwrap();
    let c = &report.cells[0];
    assert_eq!(c.standardized_plugin.len(), c.m_defined);
    let s = &c.standardized_empirical;
    assert!(mean(s).abs() < 1e-12);
    assert!((sample_sd(s) - 1.0).abs() < 1e-12);
    let pp = c.probability_plot(true);
    assert!(pp.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
    assert!((pp[0].0 + pp[99].0).abs() < 1e-12);
}

#[test]
fn rates_need_fixed_bandwidth() {
    let plan = small_plan(ScenarioSpec::weibull(1.5, 1.0).unwrap());
    assert!(run_rate_experiments(&plan).is_err());
}

#[test]
fn rate_records() {
    let mut plan = small_plan(ScenarioSpec::weibull(1.5, 1.0).unwrap());
    plan.sample_sizes = vec![200, 400];
    plan.replications = 20;
    plan.x0 = 1.0;
    plan.bandwidth_rule = BandwidthRule::Fixed(0.4);
    let r = run_rate_experiments(&plan).unwrap();
    assert_eq!(r.bias.len(), 2);
    assert_eq!(r.variance.len(), 1);
    assert_eq!(r.variance[0].records.len(), 2);
    let v: Vec<f64> = r.variance[0].records.iter().map(|x| x.scaled_variance).collect();
    assert!((r.variance[0].ratio - v[0].max(v[1]) / v[0].min(v[1])).abs() < 1e-15);
    assert!((r.true_density - 1.5 * (-1.0f64).exp()).abs() < 1e-15);
}

#[test]
fn report_formatting() {
    assert_eq!(format_real(f64::NAN), "NaN");
    assert_eq!(format_real(0.1), "1.0000000000000001e-1");
    assert_eq!(format_real(-2.5), "-2.5000000000000000e0");
    let x = 0.1 + 0.2;
    assert_eq!(format_real(x).parse::<f64>().unwrap(), x);
    assert_eq!(cell_key("weibull(1.5,1)", 1000, 0.1, Some(0.4)), "weibull-1.5-1_n1000_nsr0.1_h0.4");
    assert_eq!(cell_key("lognormal", 5000, 0.25, None), "lognormal_n5000_nsr0.25_hdefault");
}

#[test]
fn sidecars_follow_planned_names() {
    let dir = tempfile::tempdir().unwrap();
    let mut plan = small_plan(ScenarioSpec::lognormal_ma(Default::default()));
    plan.replications = 100;
    plan.bandwidth_rule = BandwidthRule::Fixed(0.3);
    let report = run_normality_experiment(&plan).unwrap();
    let written = report.write_sidecars(dir.path()).unwrap();
    let planned = plan.planned_outputs("normality");
    assert_eq!(planned.len(), 1 + written.len());
    for p in &written {
        let name = p.file_name().unwrap().to_str().unwrap();
        assert!(planned.iter().any(|q| q == name), "{name}");
    }
    let text = std::fs::read_to_string(&written[0]).unwrap();
    assert_eq!(text.lines().count(), 1 + report.cells[0].m_defined);
}

#[test]
fn normality_falls_back_to_empirical_scale() {
    // exponential beyond F = 1/3: the plug-in variance is negative
    let mut plan = small_plan(ScenarioSpec::weibull(1.0, 1.0).unwrap());
    plan.replications = 100;
    plan.x0 = 1.5;
    plan.bandwidth_rule = BandwidthRule::Fixed(0.3);
    let report = run_normality_experiment(&plan).unwrap();
    let c = &report.cells[0];
    assert!(c.empirical_fallback);
    assert!(c.standardized_plugin.is_empty() && c.ks_plugin.is_nan());
    assert_eq!(c.ks, c.ks_empirical);
    let dir = tempfile::tempdir().unwrap();
    let paths = report.write_sidecars(dir.path()).unwrap();
    let text = std::fs::read_to_string(&paths[0]).unwrap();
    assert_eq!(text.lines().count(), c.m_defined + 1);
}
