//! Monte Carlo experiments: estimate-vs-truth curves, interval coverage at a
//! point, normality of the standardized hazard estimate, and the bias and
//! variance rates.
//!
//! Every replication is a pure function of its seed,
//! `derive_seed(master, [n index, nsr index, replication])`. Replications
//! run in parallel and are collected in index order, so a plan and a master
//! seed always give the same report.

mod report;

use std::time::Instant;

use libm::erfc;
use rayon::prelude::*;

pub use report::{cell_key, format_real, write_manifest, write_report_csv, ReportRow, REPORT_HEADER};

use crate::estimators::{
    default_bandwidth, sample_sd, uniform_grid, AsymptoticConstants, DeconvolutionEstimator,
    EstimatorConfig, HazardMode, KernelEval, PointFlag,
};
use crate::fourier::{ErrorModel, GridSpec, SmoothKernel};
use crate::processes::{derive_seed, draw_sample, latent_sigma, NoiseSpec, ScenarioSpec};
use crate::truth::{truth_for, TruthFunctions};
use crate::{confidence_interval, Error, Result};

/// How the bandwidth of each replication is chosen.
#[derive(Debug, Clone, PartialEq)]
pub enum BandwidthRule {
    /// `c · sd(Y) · n^{-1/(2β+5)}` on each replication's own sample.
    Default { c: f64 },
    Fixed(f64),
    /// One cell per listed bandwidth, all on the same replications.
    Sweep(Vec<f64>),
}

impl BandwidthRule {
    fn fixed_values(&self) -> Option<Vec<f64>> {
        match self {
            BandwidthRule::Default { .. } => None,
            BandwidthRule::Fixed(h) => Some(vec![*h]),
            BandwidthRule::Sweep(hs) => Some(hs.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub scenario: ScenarioSpec,
    pub sample_sizes: Vec<usize>,
    pub nsr_levels: Vec<f64>,
    pub replications: usize,
    pub x0: f64,
    pub confidence_level: f64,
    pub grid: Vec<f64>,
    pub bandwidth_rule: BandwidthRule,
    pub master_seed: u64,
    pub kernel_eval: KernelEval<f64>,
    pub hazard_mode: HazardMode,
    pub epsilon_guard: f64,
    pub d1_override: Option<f64>,
    /// Interval on which curve sup-errors and integrated squared errors are
    /// measured.
    pub error_window: (f64, f64),
    /// Fraction of failed replications a cell tolerates.
    pub failure_budget: f64,
    /// Print one line per finished cell to stderr.
    pub verbose: bool,
}

impl ExperimentPlan {
    /// Defaults: n ∈ {1000, 2000, 5000}, NSR ∈ {0.1, 0.25, 0.5}, M = 1000,
    /// x0 = 0.5, 95% intervals, grid `[0, 6]` step 0.01, the default
    /// bandwidth rule with `c = 1`.
    pub fn new(scenario: ScenarioSpec) -> Self {
        Self {
            scenario,
            sample_sizes: vec![1000, 2000, 5000],
            nsr_levels: vec![0.1, 0.25, 0.5],
            replications: 1000,
            x0: 0.5,
            confidence_level: 0.95,
            grid: uniform_grid(0.0, 6.0, 0.01).expect("static grid"),
            bandwidth_rule: BandwidthRule::Default { c: 1.0 },
            master_seed: 1,
            kernel_eval: KernelEval::Grid(GridSpec::default()),
            hazard_mode: HazardMode::Regularized,
            epsilon_guard: 1e-3,
            d1_override: None,
            error_window: (0.2, 3.0),
            failure_budget: 0.1,
            verbose: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replications < 1 {
            return Err(Error::invalid("need at least one replication"));
        }
        if self.sample_sizes.is_empty() || self.nsr_levels.is_empty() {
            return Err(Error::invalid("plan needs at least one sample size and one NSR level"));
        }
        if let Some(n) = self.sample_sizes.iter().find(|&&n| n < 10) {
            return Err(Error::invalid(format!("sample sizes must be at least 10, got {n}")));
        }
        if let Some(r) = self.nsr_levels.iter().find(|r| !(**r >= 0.0) || !r.is_finite()) {
            return Err(Error::invalid(format!("NSR levels must be non-negative, got {r}")));
        }
        if self.grid.is_empty() || self.grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("grid must be non-empty and strictly increasing"));
        }
        let (lo, hi) = (self.grid[0], self.grid[self.grid.len() - 1]);
        if !(self.x0 >= lo && self.x0 <= hi) {
            return Err(Error::invalid(format!("x0 = {} lies outside the grid [{lo}, {hi}]", self.x0)));
        }
        let (a, b) = self.error_window;
        if !(a < b) {
            return Err(Error::invalid("error window must satisfy lo < hi"));
        }
        if !(self.confidence_level > 0.0 && self.confidence_level < 1.0) {
            return Err(Error::invalid("confidence level must lie in (0, 1)"));
        }
        if !(self.failure_budget >= 0.0 && self.failure_budget < 1.0) {
            return Err(Error::invalid("failure budget must lie in [0, 1)"));
        }
        match &self.bandwidth_rule {
            BandwidthRule::Default { c } if !(*c > 0.0) || !c.is_finite() => {
                return Err(Error::invalid(format!("bandwidth constant must be positive, got {c}")))
            }
            BandwidthRule::Sweep(hs) if hs.is_empty() => {
                return Err(Error::invalid("bandwidth sweep is empty"))
            }
            _ => {}
        }
        if let Some(hs) = self.bandwidth_rule.fixed_values() {
            if let Some(h) = hs.iter().find(|h| !(**h > 0.0) || !h.is_finite()) {
                return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
            }
        }
        Ok(())
    }

    /// `(key, value)` pairs describing the plan, for manifests.
    pub fn describe(&self) -> Vec<(String, String)> {
        let list = |v: Vec<String>| v.join(",");
        let rule = match &self.bandwidth_rule {
            BandwidthRule::Default { c } => format!("default(c={c})"),
            BandwidthRule::Fixed(h) => format!("fixed({h})"),
            BandwidthRule::Sweep(hs) => format!("sweep({})", list(hs.iter().map(f64::to_string).collect())),
        };
        let eval = match self.kernel_eval {
            KernelEval::Grid(g) => format!(
                "grid(half_width={},points={},freq_step={})",
                g.half_width, g.points, g.freq_step
            ),
            KernelEval::Exact => "exact".into(),
        };
        vec![
            ("scenario".into(), self.scenario.canonical()),
            ("sample_sizes".into(), list(self.sample_sizes.iter().map(usize::to_string).collect())),
            ("nsr_levels".into(), list(self.nsr_levels.iter().map(f64::to_string).collect())),
            ("replications".into(), self.replications.to_string()),
            ("x0".into(), self.x0.to_string()),
            ("level".into(), self.confidence_level.to_string()),
            (
                "grid".into(),
                format!("{} points on [{}, {}]", self.grid.len(), self.grid[0], self.grid[self.grid.len() - 1]),
            ),
            ("bandwidth_rule".into(), rule),
            ("master_seed".into(), self.master_seed.to_string()),
            ("kernel_eval".into(), eval),
            ("hazard_mode".into(), format!("{:?}", self.hazard_mode).to_lowercase()),
            ("epsilon_guard".into(), self.epsilon_guard.to_string()),
            (
                "d1".into(),
                self.d1_override.map_or_else(|| "computed".to_string(), |d| format!("override {d}")),
            ),
            ("error_window".into(), format!("[{}, {}]", self.error_window.0, self.error_window.1)),
            ("failure_budget".into(), self.failure_budget.to_string()),
        ]
    }

    fn seed(&self, n_idx: usize, nsr_idx: usize, rep: usize) -> u64 {
        derive_seed(self.master_seed, &[n_idx as u64, nsr_idx as u64, rep as u64])
    }

    fn max_failures(&self) -> usize {
        (self.failure_budget * self.replications as f64).floor() as usize
    }

    fn log(&self, msg: impl FnOnce() -> String) {
        if self.verbose {
            eprintln!("{}", msg());
        }
    }
}

/// The error model implied by an NSR level when the latent sd is known:
/// Laplace with `b = nsr · σ_X / √2`, or no error at `nsr = 0`.
pub fn error_model_for(scenario: &ScenarioSpec, nsr: f64) -> Result<ErrorModel<f64>> {
    let noise = NoiseSpec::new(nsr, latent_sigma(scenario))?;
    if noise.is_noiseless() {
        Ok(ErrorModel::none())
    } else {
        ErrorModel::laplace(noise.scale)
    }
}

/// Estimator set-up for one (n, nsr) block of a plan.
struct Block {
    n: usize,
    n_idx: usize,
    nsr: f64,
    nsr_idx: usize,
    beta: u32,
    /// Built at a placeholder bandwidth when the rule is data-driven, and
    /// re-targeted per replication with `with_bandwidth`.
    base: DeconvolutionEstimator<f64>,
}

fn blocks(plan: &ExperimentPlan, grid: &[f64], first_h: f64) -> Result<Vec<Block>> {
    let kernel = SmoothKernel::fan();
    let mut out = Vec::new();
    for (nsr_idx, &nsr) in plan.nsr_levels.iter().enumerate() {
        let model = error_model_for(&plan.scenario, nsr)?;
        let constants = match plan.d1_override {
            Some(d1) => AsymptoticConstants { d1, d2: crate::constant_d2(&kernel, &model)? },
            None => AsymptoticConstants::compute(&kernel, &model)?,
        };
        let mut config = EstimatorConfig::new(first_h)
            .with_grid(grid.to_vec())
            .with_mode(plan.hazard_mode)
            .with_kernel_eval(plan.kernel_eval)
            .with_level(plan.confidence_level);
        config.epsilon_guard = plan.epsilon_guard;
        config.d1_override = plan.d1_override;
        let base = DeconvolutionEstimator::new(&kernel, &model, config)?.with_constants(constants);
        for (n_idx, &n) in plan.sample_sizes.iter().enumerate() {
            out.push(Block { n, n_idx, nsr, nsr_idx, beta: model.beta(), base: base.clone() });
        }
    }
    // Order cells by n, then nsr.
    out.sort_by_key(|b| (b.n_idx, b.nsr_idx));
    Ok(out)
}

/// One replication's sample and the estimator it is evaluated with.
struct Draw {
    observations: Vec<f64>,
    bandwidth: f64,
}

fn draw(plan: &ExperimentPlan, block: &Block, rep: usize, fixed_h: Option<f64>) -> Result<Draw> {
    let seed = plan.seed(block.n_idx, block.nsr_idx, rep);
    let sample = draw_sample(&plan.scenario, block.n, block.nsr, seed)?;
    let observations = sample.observations().to_vec();
    let bandwidth = match (fixed_h, &plan.bandwidth_rule) {
        (Some(h), _) => h,
        (None, BandwidthRule::Default { c }) => default_bandwidth(&observations, block.beta, *c)?,
        (None, _) => unreachable!("fixed rules always pass a bandwidth"),
    };
    Ok(Draw { observations, bandwidth })
}

/// Per-cell bandwidth list: `None` stands for the data-driven rule.
fn cell_bandwidths(plan: &ExperimentPlan) -> Vec<Option<f64>> {
    match plan.bandwidth_rule.fixed_values() {
        Some(hs) => hs.into_iter().map(Some).collect(),
        None => vec![None],
    }
}

fn estimator_for(block: &Block, fixed: &Option<DeconvolutionEstimator<f64>>, h: f64) -> Result<DeconvolutionEstimator<f64>> {
    match fixed {
        Some(e) => Ok(e.clone()),
        None => block.base.with_bandwidth(h),
    }
}

fn fixed_estimator(block: &Block, h: Option<f64>) -> Result<Option<DeconvolutionEstimator<f64>>> {
    h.map(|h| block.base.with_bandwidth(h)).transpose()
}

fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Linear-interpolation percentile (`q` in `[0, 1]`) of the finite values.
pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

/// Trapezoid integral of `(estimate - truth)²` over `grid`.
pub fn mise(estimate: &[f64], truth: &[f64], grid: &[f64]) -> Result<f64> {
    if estimate.len() != grid.len() || truth.len() != grid.len() {
        return Err(Error::LengthMismatch(format!(
            "curve lengths {} and {} against a grid of {}",
            estimate.len(),
            truth.len(),
            grid.len()
        )));
    }
    let sq = |j: usize| (estimate[j] - truth[j]).powi(2);
    Ok((1..grid.len()).map(|j| 0.5 * (grid[j] - grid[j - 1]) * (sq(j - 1) + sq(j))).sum())
}

pub fn standard_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// Kolmogorov–Smirnov distance between the empirical law of `values` and
/// N(0, 1).
pub fn ks_distance_normal(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Degenerate("KS distance needs a non-empty finite sample".into()));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0, |d, (i, &x)| {
        let p = standard_normal_cdf(x);
        d.max((i + 1) as f64 / m - p).max(p - i as f64 / m)
    }))
}

// ---------------------------------------------------------------------------
// Curves

#[derive(Debug, Clone, PartialEq)]
pub struct CurveCell {
    pub n: usize,
    pub nsr: f64,
    /// The fixed bandwidth, or the mean of the per-replication bandwidths.
    pub bandwidth: f64,
    pub bandwidth_fixed: bool,
    pub seeds: Vec<u64>,
    /// `λ_n` on the plan grid per replication; `None` marks a failure.
    pub curves: Vec<Option<Vec<f64>>>,
    pub failures: Vec<String>,
    pub mean_curve: Vec<f64>,
    pub p05: Vec<f64>,
    pub p95: Vec<f64>,
    pub truth: Option<Vec<f64>>,
    /// Per-replication `sup |λ_n - λ|` on the error window.
    pub sup_errors: Vec<f64>,
    pub mean_sup_error: f64,
    pub mise: f64,
    pub mean_bias: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurveReport {
    pub scenario: String,
    pub master_seed: u64,
    pub grid: Vec<f64>,
    pub cells: Vec<CurveCell>,
}

/// Grid with `x0` merged in; returns the grid and the index of `x0`.
fn grid_with_point(grid: &[f64], x0: f64) -> (Vec<f64>, usize, Option<usize>) {
    match grid.iter().position(|&x| x == x0) {
        Some(i) => (grid.to_vec(), i, None),
        None => {
            let i = grid.partition_point(|&x| x < x0);
            let mut g = grid.to_vec();
            g.insert(i, x0);
            (g, i, Some(i))
        }
    }
}

pub fn run_curve_experiment(plan: &ExperimentPlan) -> Result<CurveReport> {
    plan.validate()?;
    let truth = truth_for(&plan.scenario).ok();
    let (eval_grid, x0_idx, inserted) = grid_with_point(&plan.grid, plan.x0);
    let hs = cell_bandwidths(plan);
    let mut cells = Vec::new();
    for block in blocks(plan, &eval_grid, hs[0].unwrap_or(1.0))? {
        for &h in &hs {
            let start = Instant::now();
            let fixed = fixed_estimator(&block, h)?;
            let reps: Vec<(u64, Result<(f64, Vec<f64>)>)> = (0..plan.replications)
                .into_par_iter()
                .map(|rep| {
                    let seed = plan.seed(block.n_idx, block.nsr_idx, rep);
                    let run = || -> Result<(f64, Vec<f64>)> {
                        let d = draw(plan, &block, rep, h)?;
                        let est = estimator_for(&block, &fixed, d.bandwidth)?;
                        let sums = est.kernel_sums(&d.observations)?;
                        let lambda = match est.hazard_from(&sums.density, &sums.cdf) {
                            Ok(l) => l,
                            Err(Error::DenominatorBelowGuard { lambda, .. }) => lambda,
                            Err(e) => return Err(e),
                        };
                        Ok((d.bandwidth, lambda))
                    };
                    (seed, run())
                })
                .collect();
            let cell = curve_cell(plan, &block, h, reps, truth.as_ref(), x0_idx, inserted)?;
            plan.log(|| {
                format!(
                    "curves {} n={} nsr={} h={:.4}: mean sup-error {:.4}, {} failure(s) [{:.1}s]",
                    plan.scenario,
                    cell.n,
                    cell.nsr,
                    cell.bandwidth,
                    cell.mean_sup_error,
                    cell.failures.len(),
                    start.elapsed().as_secs_f64()
                )
            });
            cells.push(cell);
        }
    }
    Ok(CurveReport {
        scenario: plan.scenario.to_string(),
        master_seed: plan.master_seed,
        grid: plan.grid.clone(),
        cells,
    })
}

#[allow(clippy::too_many_arguments)]
fn curve_cell(
    plan: &ExperimentPlan,
    block: &Block,
    h: Option<f64>,
    reps: Vec<(u64, Result<(f64, Vec<f64>)>)>,
    truth: Option<&TruthFunctions<f64>>,
    x0_idx: usize,
    inserted: Option<usize>,
) -> Result<CurveCell> {
    let strip = |mut v: Vec<f64>| {
        if let Some(i) = inserted {
            v.remove(i);
        }
        v
    };
    let grid = &plan.grid;
    let truth_curve = truth.map(|t| grid.iter().map(|&x| t.hazard(x)).collect::<Vec<_>>());
    let (wa, wb) = plan.error_window;
    let window: Vec<usize> = (0..grid.len()).filter(|&j| grid[j] >= wa && grid[j] <= wb).collect();

    let mut seeds = Vec::with_capacity(reps.len());
    let mut curves = Vec::with_capacity(reps.len());
    let mut failures = Vec::new();
    let mut bandwidths = Vec::new();
    let mut at_x0 = Vec::new();
    for (seed, r) in reps {
        seeds.push(seed);
        match r {
            Ok((bw, lambda)) => {
                bandwidths.push(bw);
                at_x0.push(lambda[x0_idx]);
                curves.push(Some(strip(lambda)));
            }
            Err(e) => {
                failures.push(format!("replication {}: {e}", curves.len()));
                curves.push(None);
            }
        }
    }
    let ok: Vec<&Vec<f64>> = curves.iter().flatten().collect();
    let column = |j: usize| ok.iter().map(|c| c[j]).filter(|v| v.is_finite()).collect::<Vec<f64>>();
    let mean_curve: Vec<f64> = (0..grid.len()).map(|j| mean(&column(j))).collect();
    let p05 = (0..grid.len()).map(|j| percentile(&column(j), 0.05)).collect();
    let p95 = (0..grid.len()).map(|j| percentile(&column(j), 0.95)).collect();

    let (sup_errors, mise_value, mean_bias) = match (&truth_curve, truth) {
        (Some(tc), Some(t)) if !window.is_empty() => {
            let wgrid: Vec<f64> = window.iter().map(|&j| grid[j]).collect();
            let wtruth: Vec<f64> = window.iter().map(|&j| tc[j]).collect();
            let mut sups = Vec::with_capacity(ok.len());
            let mut ises = Vec::with_capacity(ok.len());
            for c in &ok {
                let wc: Vec<f64> = window.iter().map(|&j| c[j]).collect();
                sups.push(wc.iter().zip(&wtruth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                ises.push(mise(&wc, &wtruth, &wgrid)?);
            }
            let x0_truth = t.hazard(plan.x0);
            (sups, mean(&ises), mean(&at_x0) - x0_truth)
        }
        _ => (Vec::new(), f64::NAN, f64::NAN),
    };
    let failed = failures.len() > plan.max_failures();
    Ok(CurveCell {
        n: block.n,
        nsr: block.nsr,
        bandwidth: h.unwrap_or_else(|| mean(&bandwidths)),
        bandwidth_fixed: h.is_some(),
        seeds,
        curves,
        failures,
        mean_curve,
        p05,
        p95,
        truth: truth_curve,
        mean_sup_error: if sup_errors.is_empty() { f64::NAN } else { mean(&sup_errors) },
        sup_errors,
        mise: mise_value,
        mean_bias,
        failed,
    })
}

// ---------------------------------------------------------------------------
// Coverage

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReplication {
    pub seed: u64,
    pub bandwidth: f64,
    pub lambda: f64,
    pub sigma_sq: f64,
    /// The interval at the plan level; `None` when undefined.
    pub interval: Option<(f64, f64)>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageCell {
    pub n: usize,
    pub nsr: f64,
    pub bandwidth: f64,
    pub bandwidth_fixed: bool,
    pub beta: u32,
    pub level: f64,
    pub true_hazard: f64,
    pub replications: Vec<CoverageReplication>,
    pub contained: usize,
    pub missed: usize,
    pub undefined: usize,
    pub failures: usize,
    /// `contained / M`.
    pub cp: f64,
    /// Mean width of the defined intervals.
    pub al: f64,
    pub mean_bias: f64,
    pub failed: bool,
}

impl CoverageCell {
    /// Coverage of the same replications at another level.
    pub fn coverage_at(&self, level: f64) -> Result<f64> {
        let mut contained = 0;
        for r in &self.replications {
            if r.interval.is_none() {
                continue;
            }
            let ci = confidence_interval(&[r.lambda], &[r.sigma_sq], self.n, r.bandwidth, self.beta, level)?;
            if let Some((lo, hi)) = ci[0] {
                if lo <= self.true_hazard && self.true_hazard <= hi {
                    contained += 1;
                }
            }
        }
        Ok(contained as f64 / self.replications.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoverageReport {
    pub scenario: String,
    pub master_seed: u64,
    pub x0: f64,
    pub cells: Vec<CoverageCell>,
}

/// Estimates at `x0` alone for each replication of a block.
fn point_replications(
    plan: &ExperimentPlan,
    block: &Block,
    h: Option<f64>,
) -> Result<Vec<CoverageReplication>> {
    let fixed = fixed_estimator(block, h)?;
    Ok((0..plan.replications)
        .into_par_iter()
        .map(|rep| {
            let seed = plan.seed(block.n_idx, block.nsr_idx, rep);
            let run = || -> Result<CoverageReplication> {
                let d = draw(plan, block, rep, h)?;
                let est = estimator_for(block, &fixed, d.bandwidth)?.estimate(&d.observations)?;
                let interval = match est.flags[0] {
                    PointFlag::Ok => Some((est.ci_lower[0], est.ci_upper[0])),
                    _ => None,
                };
                Ok(CoverageReplication {
                    seed,
                    bandwidth: d.bandwidth,
                    lambda: est.hazard[0],
                    sigma_sq: est.sigma_sq[0],
                    interval,
                    failure: None,
                })
            };
            run().unwrap_or_else(|e| CoverageReplication {
                seed,
                bandwidth: h.unwrap_or(f64::NAN),
                lambda: f64::NAN,
                sigma_sq: f64::NAN,
                interval: None,
                failure: Some(e.to_string()),
            })
        })
        .collect())
}

pub fn run_coverage_experiment(plan: &ExperimentPlan) -> Result<CoverageReport> {
    plan.validate()?;
    let truth = truth_for(&plan.scenario)?;
    let true_hazard = truth.hazard(plan.x0);
    if !true_hazard.is_finite() {
        return Err(Error::invalid(format!("true hazard is not finite at x0 = {}", plan.x0)));
    }
    let hs = cell_bandwidths(plan);
    let mut cells = Vec::new();
    for block in blocks(plan, &[plan.x0], hs[0].unwrap_or(1.0))? {
        for &h in &hs {
            let start = Instant::now();
            let replications = point_replications(plan, &block, h)?;
            let mut contained = 0;
            let mut missed = 0;
            let mut undefined = 0;
            let mut widths = Vec::new();
            for r in &replications {
                match r.interval {
                    Some((lo, hi)) => {
                        widths.push(hi - lo);
                        if lo <= true_hazard && true_hazard <= hi {
                            contained += 1;
                        } else {
                            missed += 1;
                        }
                    }
                    None => undefined += 1,
                }
            }
            let failures = replications.iter().filter(|r| r.failure.is_some()).count();
            let lambdas: Vec<f64> = replications.iter().map(|r| r.lambda).filter(|v| v.is_finite()).collect();
            let bws: Vec<f64> = replications.iter().map(|r| r.bandwidth).filter(|v| v.is_finite()).collect();
            let m = replications.len();
            let cell = CoverageCell {
                n: block.n,
                nsr: block.nsr,
                bandwidth: h.unwrap_or_else(|| mean(&bws)),
                bandwidth_fixed: h.is_some(),
                beta: block.beta,
                level: plan.confidence_level,
                true_hazard,
                replications,
                contained,
                missed,
                undefined,
                failures,
                cp: contained as f64 / m as f64,
                al: mean(&widths),
                mean_bias: mean(&lambdas) - true_hazard,
                failed: failures > plan.max_failures(),
            };
            plan.log(|| {
                format!(
                    "coverage {} n={} nsr={} h={:.4}: CP {:.3}, AL {:.4}, {} undefined [{:.1}s]",
                    plan.scenario,
                    cell.n,
                    cell.nsr,
                    cell.bandwidth,
                    cell.cp,
                    cell.al,
                    cell.undefined,
                    start.elapsed().as_secs_f64()
                )
            });
            cells.push(cell);
        }
    }
    Ok(CoverageReport { scenario: plan.scenario.to_string(), master_seed: plan.master_seed, x0: plan.x0, cells })
}

// ---------------------------------------------------------------------------
// Normality

fn spread(values: &[f64]) -> f64 {
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    hi - lo
}

/// `s_r = √(n h_r^{2β}) (λ_r - mean λ) / σ̂` with `σ̂` the mean of the
/// replication plug-in `σ_n(x0)`.
pub fn standardize_plugin(lambdas: &[f64], sigma_sq: &[f64], n: usize, bandwidths: &[f64], beta: u32) -> Result<Vec<f64>> {
    if sigma_sq.len() != lambdas.len() || bandwidths.len() != lambdas.len() {
        return Err(Error::LengthMismatch("standardization inputs differ in length".into()));
    }
    let sigmas: Vec<f64> = sigma_sq.iter().filter(|s| **s > 0.0 && s.is_finite()).map(|s| s.sqrt()).collect();
    let sigma_hat = mean(&sigmas);
    if !(sigma_hat > 0.0) || !sigma_hat.is_finite() {
        return Err(Error::Degenerate("no positive plug-in variance to standardize with".into()));
    }
    if !(spread(lambdas) > 0.0) {
        return Err(Error::Degenerate("all replications give the same estimate".into()));
    }
    let centre = mean(lambdas);
    Ok(lambdas
        .iter()
        .zip(bandwidths)
        .map(|(l, h)| (n as f64 * h.powi(2 * beta as i32)).sqrt() * (l - centre) / sigma_hat)
        .collect())
}

/// `s_r = (λ_r - mean λ) / sd(λ)`.
pub fn standardize_empirical(lambdas: &[f64]) -> Result<Vec<f64>> {
    if lambdas.len() < 2 {
        return Err(Error::Degenerate("empirical standardization needs two replications".into()));
    }
    let sd = sample_sd(lambdas);
    if !(spread(lambdas) > 0.0) || !sd.is_finite() {
        return Err(Error::Degenerate("replications have zero spread".into()));
    }
    let centre = mean(lambdas);
    Ok(lambdas.iter().map(|l| (l - centre) / sd).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityCell {
    pub n: usize,
    pub nsr: f64,
    pub bandwidth: f64,
    pub bandwidth_fixed: bool,
    pub replications: Vec<CoverageReplication>,
    /// In replication order, over replications with a finite estimate.
    pub standardized_plugin: Vec<f64>,
    pub standardized_empirical: Vec<f64>,
    pub sigma_hat: f64,
    /// NaN when no replication had a positive plug-in variance.
    pub ks_plugin: f64,
    pub ks_empirical: f64,
    /// Plug-in KS, or the empirical one when the plug-in scale is unavailable.
    pub ks: f64,
    pub empirical_fallback: bool,
    pub mean_bias: f64,
    pub m_defined: usize,
    pub failures: usize,
    pub failed: bool,
}

impl NormalityCell {
    /// `(Φ^{-1}((i - 1/2)/m), s_(i))` pairs for a normal probability plot.
    pub fn probability_plot(&self, plugin: bool) -> Vec<(f64, f64)> {
        let mut s = if plugin { self.standardized_plugin.clone() } else { self.standardized_empirical.clone() };
        s.sort_by(f64::total_cmp);
        let m = s.len() as f64;
        s.into_iter()
            .enumerate()
            .map(|(i, v)| (crate::normal_quantile((i as f64 + 0.5) / m).unwrap_or(f64::NAN), v))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormalityReport {
    pub scenario: String,
    pub master_seed: u64,
    pub x0: f64,
    pub cells: Vec<NormalityCell>,
}

pub fn run_normality_experiment(plan: &ExperimentPlan) -> Result<NormalityReport> {
    plan.validate()?;
    if plan.replications < 100 {
        return Err(Error::invalid(format!(
            "normality diagnostics need at least 100 replications, got {}",
            plan.replications
        )));
    }
    let truth = truth_for(&plan.scenario).ok();
    let hs = cell_bandwidths(plan);
    let mut cells = Vec::new();
    for block in blocks(plan, &[plan.x0], hs[0].unwrap_or(1.0))? {
        for &h in &hs {
            let start = Instant::now();
            let replications = point_replications(plan, &block, h)?;
            let failures = replications.iter().filter(|r| r.failure.is_some()).count();
            let defined: Vec<&CoverageReplication> =
                replications.iter().filter(|r| r.lambda.is_finite()).collect();
            let lambdas: Vec<f64> = defined.iter().map(|r| r.lambda).collect();
            let sig: Vec<f64> = defined.iter().map(|r| r.sigma_sq).collect();
            let bws: Vec<f64> = defined.iter().map(|r| r.bandwidth).collect();
            let tag = format!("n={} nsr={}", block.n, block.nsr);
            let with_tag = |e: Error| match e {
                Error::Degenerate(m) => Error::Degenerate(format!("normality cell {tag}: {m}")),
                other => other,
            };
            let emp = standardize_empirical(&lambdas).map_err(with_tag)?;
            let sigma_hat = mean(&sig.iter().filter(|s| **s > 0.0 && s.is_finite()).map(|s| s.sqrt()).collect::<Vec<_>>());
            let plug = if sigma_hat > 0.0 && sigma_hat.is_finite() {
                standardize_plugin(&lambdas, &sig, block.n, &bws, block.beta).map_err(with_tag)?
            } else {
                plan.log(|| format!("normality {tag}: no positive plug-in variance, using empirical scale"));
                Vec::new()
            };
            let ks_plugin = if plug.is_empty() { f64::NAN } else { ks_distance_normal(&plug)? };
            let ks_empirical = ks_distance_normal(&emp)?;
            let cell = NormalityCell {
                n: block.n,
                nsr: block.nsr,
                bandwidth: h.unwrap_or_else(|| mean(&bws)),
                bandwidth_fixed: h.is_some(),
                ks_plugin,
                ks_empirical,
                ks: if plug.is_empty() { ks_empirical } else { ks_plugin },
                empirical_fallback: plug.is_empty(),
                standardized_plugin: plug,
                standardized_empirical: emp,
                sigma_hat,
                mean_bias: truth.map_or(f64::NAN, |t| mean(&lambdas) - t.hazard(plan.x0)),
                m_defined: lambdas.len(),
                failures,
                failed: failures > plan.max_failures(),
                replications,
            };
            plan.log(|| {
                format!(
                    "normality {} n={} nsr={} h={:.4}: KS {:.4} (empirical {:.4}) [{:.1}s]",
                    plan.scenario,
                    cell.n,
                    cell.nsr,
                    cell.bandwidth,
                    cell.ks_plugin,
                    cell.ks_empirical,
                    start.elapsed().as_secs_f64()
                )
            });
            cells.push(cell);
        }
    }
    Ok(NormalityReport { scenario: plan.scenario.to_string(), master_seed: plan.master_seed, x0: plan.x0, cells })
}

// ---------------------------------------------------------------------------
// Rates

/// Monte Carlo bias of `f_n(x0)` at `h` and `h/2` on the same replications.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasRecord {
    pub n: usize,
    pub nsr: f64,
    pub bandwidth: f64,
    pub bias_h: f64,
    pub bias_half: f64,
    /// Standard errors of the two bias estimates.
    pub se_h: f64,
    pub se_half: f64,
    pub ratio: f64,
    pub m_defined: usize,
    pub failures: usize,
    pub failed: bool,
}

/// `n · h^{2β} · Var(F_n(x0))` at one sample size.
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRecord {
    pub n: usize,
    pub nsr: f64,
    pub bandwidth: f64,
    pub scaled_variance: f64,
    pub m_defined: usize,
}

/// Variance records across the plan's sample sizes at one (nsr, h).
#[derive(Debug, Clone, PartialEq)]
pub struct VarianceScaling {
    pub nsr: f64,
    pub bandwidth: f64,
    pub records: Vec<VarianceRecord>,
    /// `max / min` of the scaled variances.
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateReport {
    pub scenario: String,
    pub master_seed: u64,
    pub x0: f64,
    pub true_density: f64,
    pub bias: Vec<BiasRecord>,
    pub variance: Vec<VarianceScaling>,
}

fn mean_and_se(values: &[f64]) -> (f64, f64) {
    let m = mean(values);
    if values.len() < 2 {
        return (m, f64::NAN);
    }
    (m, sample_sd(values) / (values.len() as f64).sqrt())
}

pub fn run_rate_experiments(plan: &ExperimentPlan) -> Result<RateReport> {
    plan.validate()?;
    let hs = plan
        .bandwidth_rule
        .fixed_values()
        .ok_or_else(|| Error::invalid("rate experiments need a fixed bandwidth or a sweep"))?;
    let truth = truth_for(&plan.scenario)?;
    let true_density = truth.density(plan.x0);
    let mut bias = Vec::new();
    let mut variance: Vec<VarianceScaling> = Vec::new();
    for block in blocks(plan, &[plan.x0], hs[0])? {
        for &h in &hs {
            let start = Instant::now();
            let at_h = block.base.with_bandwidth(h)?;
            let at_half = block.base.with_bandwidth(0.5 * h)?;
            let reps: Vec<Result<(f64, f64, f64)>> = (0..plan.replications)
                .into_par_iter()
                .map(|rep| {
                    let d = draw(plan, &block, rep, Some(h))?;
                    let full = at_h.kernel_sums(&d.observations)?;
                    let half = at_half.kernel_sums(&d.observations)?;
                    Ok((full.density[0], half.density[0], full.cdf[0]))
                })
                .collect();
            let failures = reps.iter().filter(|r| r.is_err()).count();
            let ok: Vec<(f64, f64, f64)> = reps.into_iter().flatten().collect();
            let err_h: Vec<f64> = ok.iter().map(|r| r.0 - true_density).collect();
            let err_half: Vec<f64> = ok.iter().map(|r| r.1 - true_density).collect();
            let cdfs: Vec<f64> = ok.iter().map(|r| r.2).collect();
            let (bias_h, se_h) = mean_and_se(&err_h);
            let (bias_half, se_half) = mean_and_se(&err_half);
            let var_f = if cdfs.len() >= 2 { sample_sd(&cdfs).powi(2) } else { f64::NAN };
            let record = BiasRecord {
                n: block.n,
                nsr: block.nsr,
                bandwidth: h,
                bias_h,
                bias_half,
                se_h,
                se_half,
                ratio: bias_h / bias_half,
                m_defined: ok.len(),
                failures,
                failed: failures > plan.max_failures(),
            };
            plan.log(|| {
                format!(
                    "rates {} n={} nsr={} h={}: bias ratio {:.3} [{:.1}s]",
                    plan.scenario,
                    block.n,
                    block.nsr,
                    h,
                    record.ratio,
                    start.elapsed().as_secs_f64()
                )
            });
            bias.push(record);
            let vr = VarianceRecord {
                n: block.n,
                nsr: block.nsr,
                bandwidth: h,
                scaled_variance: block.n as f64 * h.powi(2 * block.beta as i32) * var_f,
                m_defined: ok.len(),
            };
            match variance.iter_mut().find(|v| v.nsr == block.nsr && v.bandwidth == h) {
                Some(v) => v.records.push(vr),
                None => variance.push(VarianceScaling { nsr: block.nsr, bandwidth: h, records: vec![vr], ratio: f64::NAN }),
            }
        }
    }
    for v in &mut variance {
        let vals: Vec<f64> = v.records.iter().map(|r| r.scaled_variance).collect();
        let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
        v.ratio = hi / lo;
    }
    Ok(RateReport {
        scenario: plan.scenario.to_string(),
        master_seed: plan.master_seed,
        x0: plan.x0,
        true_density,
        bias,
        variance,
    })
}

#[cfg(test)]
mod tests;
