//! Deconvolution estimators `f_n`, `F_n`, `λ_n`, the observed-data kernel
//! estimators `g_n`, `G_n`, and the plug-in variance and intervals built on
//! them.
//!
//! With bandwidth `h` and sample `Y_1..Y_n`,
//!
//! ```text
//! f_n(x) = (1/nh) Σ W_h((x - Y_i)/h)      F_n(x) = (1/n) Σ M_h((x - Y_i)/h)
//! g_n(x) = (1/nh) Σ k((x - Y_i)/h)        G_n(x) = (1/n) Σ K((x - Y_i)/h)
//! λ_n(x) = f_n(x) / (1 - min(F_n(x), 1 - ε))
//! ```
//!
//! All four sums are accumulated in one pass per evaluation point, in sample
//! order, so results do not depend on how points are scheduled.

mod inference;

pub use inference::{
    confidence_interval, critical_value, default_bandwidth, normal_quantile, plugin_variance,
    sample_sd,
};

use rayon::prelude::*;

use crate::fourier::{
    constant_d1, constant_d2, deconv_cdf_point, deconv_kernel_grid, deconv_kernel_point,
    plain_kernel_point, ErrorModel, GridSpec, KernelGrid, SmoothKernel, D1_TRUNCATION,
};
use crate::{Error, Result, Scalar};

/// Where a sample came from.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub scenario: String,
    pub seed: u64,
    pub nsr: f64,
}

/// Observed contaminated data `Y_i`: at least two finite values.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    observations: Vec<T>,
    provenance: Option<Provenance>,
}

impl<T: Scalar> Sample<T> {
    pub fn new(observations: Vec<T>) -> Result<Self> {
        if observations.len() < 2 {
            return Err(Error::InvalidSample(format!(
                "need at least 2 observations, got {}",
                observations.len()
            )));
        }
        if let Some(i) = observations.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSample(format!("observation {i} is not finite")));
        }
        Ok(Self { observations, provenance: None })
    }

    pub fn with_provenance(mut self, provenance: Provenance) -> Self {
        self.provenance = Some(provenance);
        self
    }

    pub fn observations(&self) -> &[T] {
        &self.observations
    }

    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    pub fn provenance(&self) -> Option<&Provenance> {
        self.provenance.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HazardMode {
    /// Denominator `1 - min(F_n, 1 - ε)`, never below `ε`.
    #[default]
    Regularized,
    /// Denominator `1 - F_n`; points where it drops below `ε` are an error.
    Asymptotic,
}

/// How `W_h`, `M_h`, `k` and `K` are evaluated.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelEval<T> {
    /// Linear interpolation on an FFT-tabulated grid.
    Grid(GridSpec<T>),
    /// Adaptive quadrature at every `(x, Y_i)` pair. Slow; for checking.
    Exact,
}

impl<T: Scalar> Default for KernelEval<T> {
    fn default() -> Self {
        KernelEval::Grid(GridSpec::default())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimatorConfig<T> {
    pub bandwidth: T,
    pub epsilon_guard: T,
    pub hazard_mode: HazardMode,
    pub eval_grid: Vec<T>,
    pub confidence_level: T,
    pub kernel_eval: KernelEval<T>,
    /// Replaces the computed `D1` in the plug-in variance.
    pub d1_override: Option<T>,
    /// Clamp negative `f_n` to zero before forming the hazard.
    pub clamp_negative_density: bool,
}

impl<T: Scalar> EstimatorConfig<T> {
    /// Bandwidth `h` on the default grid `[0, 6]` with step `0.01`.
    pub fn new(bandwidth: T) -> Self {
        Self {
            bandwidth,
            epsilon_guard: T::lit(1e-3),
            hazard_mode: HazardMode::Regularized,
            eval_grid: uniform_grid(T::zero(), T::lit(6.0), T::lit(0.01))
                .expect("default grid is valid"),
            confidence_level: T::lit(0.95),
            kernel_eval: KernelEval::default(),
            d1_override: None,
            clamp_negative_density: false,
        }
    }

    pub fn with_grid(mut self, grid: Vec<T>) -> Self {
        self.eval_grid = grid;
        self
    }

    pub fn with_mode(mut self, mode: HazardMode) -> Self {
        self.hazard_mode = mode;
        self
    }

    pub fn with_kernel_eval(mut self, eval: KernelEval<T>) -> Self {
        self.kernel_eval = eval;
        self
    }

    pub fn with_level(mut self, level: T) -> Self {
        self.confidence_level = level;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > T::zero()) || !self.bandwidth.is_finite() {
            return Err(Error::invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        if !(self.epsilon_guard > T::zero() && self.epsilon_guard < T::one()) {
            return Err(Error::invalid("epsilon guard must lie in (0, 1)"));
        }
        if !(self.confidence_level > T::zero() && self.confidence_level < T::one()) {
            return Err(Error::invalid("confidence level must lie in (0, 1)"));
        }
        if self.eval_grid.is_empty() {
            return Err(Error::invalid("evaluation grid is empty"));
        }
        if self.eval_grid.iter().any(|x| !x.is_finite())
            || self.eval_grid.windows(2).any(|w| !(w[1] > w[0]))
        {
            return Err(Error::invalid("evaluation grid must be finite and strictly increasing"));
        }
        if let Some(d1) = self.d1_override {
            if !d1.is_finite() {
                return Err(Error::invalid("D1 override must be finite"));
            }
        }
        Ok(())
    }
}

/// `lo, lo + step, ...` up to `hi` inclusive (to within a step fraction of
/// `1e-9`), computed as `lo + j·step` to avoid accumulated drift.
pub fn uniform_grid<T: Scalar>(lo: T, hi: T, step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) || !(hi >= lo) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::invalid("grid needs finite lo ≤ hi and a positive step"));
    }
    let count = ((hi - lo) / step + T::lit(1e-9)).floor().to_usize().unwrap_or(0);
    if count > 10_000_000 {
        return Err(Error::invalid("grid has too many points"));
    }
    Ok((0..=count).map(|j| lo + T::usize(j) * step).collect())
}

/// Per-point reliability of a hazard estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PointFlag {
    Ok,
    /// `1 - F_n < ε`: the variance and interval are not reported.
    DenominatorBelowGuard,
    /// `σ_n² ≤ 0`: the interval is not reported.
    NonPositiveVariance,
}

impl PointFlag {
    pub fn as_str(self) -> &'static str {
        match self {
            PointFlag::Ok => "ok",
            PointFlag::DenominatorBelowGuard => "denominator_below_guard",
            PointFlag::NonPositiveVariance => "nonpositive_variance",
        }
    }
}

/// Grid-evaluated estimates. Missing variances and interval bounds are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct HazardEstimate<T> {
    pub grid: Vec<T>,
    pub density: Vec<T>,
    pub cdf: Vec<T>,
    pub hazard: Vec<T>,
    pub observed_density: Vec<T>,
    pub observed_cdf: Vec<T>,
    pub sigma_sq: Vec<T>,
    pub ci_lower: Vec<T>,
    pub ci_upper: Vec<T>,
    pub flags: Vec<PointFlag>,
    pub bandwidth: T,
    pub n: usize,
    pub beta: u32,
    pub d1: T,
    pub d2: T,
}

/// The constants `D1` and `D2` of a (kernel, error model) pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AsymptoticConstants<T> {
    pub d1: T,
    pub d2: T,
}

impl<T: Scalar> AsymptoticConstants<T> {
    pub fn compute(kernel: &SmoothKernel<T>, model: &ErrorModel<T>) -> Result<Self> {
        let d1 = constant_d1(kernel, model, T::lit(D1_TRUNCATION))?.value;
        let d2 = constant_d2(kernel, model)?;
        Ok(Self { d1, d2 })
    }
}

#[derive(Debug, Clone)]
enum Evaluator<T> {
    Grid { deconv: KernelGrid<T>, plain: KernelGrid<T> },
    Exact,
}

/// The four kernel sums at each evaluation point.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelSums<T> {
    pub density: Vec<T>,
    pub cdf: Vec<T>,
    pub observed_density: Vec<T>,
    pub observed_cdf: Vec<T>,
}

/// An estimator bound to a (kernel, error model, configuration) triple. The
/// kernel grids and constants are built once and reused across samples.
#[derive(Debug, Clone)]
pub struct DeconvolutionEstimator<T> {
    kernel: SmoothKernel<T>,
    model: ErrorModel<T>,
    config: EstimatorConfig<T>,
    evaluator: Evaluator<T>,
    constants: Option<AsymptoticConstants<T>>,
}

impl<T: Scalar> DeconvolutionEstimator<T> {
    pub fn new(
        kernel: &SmoothKernel<T>,
        model: &ErrorModel<T>,
        config: EstimatorConfig<T>,
    ) -> Result<Self> {
        config.validate()?;
        let evaluator = match config.kernel_eval {
            KernelEval::Grid(spec) => Evaluator::Grid {
                deconv: deconv_kernel_grid(kernel, model, config.bandwidth, spec)?,
                plain: deconv_kernel_grid(kernel, &ErrorModel::none(), T::one(), spec)?,
            },
            KernelEval::Exact => Evaluator::Exact,
        };
        Ok(Self {
            kernel: kernel.clone(),
            model: *model,
            config,
            evaluator,
            constants: None,
        })
    }

    /// Supplies precomputed `D1`/`D2` instead of computing them on first use.
    pub fn with_constants(mut self, constants: AsymptoticConstants<T>) -> Self {
        self.constants = Some(constants);
        self
    }

    /// The same estimator at bandwidth `h`. The plain-kernel grid and any
    /// precomputed constants are reused, so only `W_h` is rebuilt.
    pub fn with_bandwidth(&self, h: T) -> Result<Self> {
        let mut config = self.config.clone();
        config.bandwidth = h;
        config.validate()?;
        let evaluator = match (&self.evaluator, config.kernel_eval) {
            (Evaluator::Grid { plain, .. }, KernelEval::Grid(spec)) => Evaluator::Grid {
                deconv: deconv_kernel_grid(&self.kernel, &self.model, h, spec)?,
                plain: plain.clone(),
            },
            _ => Evaluator::Exact,
        };
        Ok(Self { kernel: self.kernel.clone(), model: self.model, config, evaluator, constants: self.constants })
    }

    pub fn config(&self) -> &EstimatorConfig<T> {
        &self.config
    }

    pub fn model(&self) -> &ErrorModel<T> {
        &self.model
    }

    /// The tabulated `W_h` grid, when the grid evaluator is in use.
    pub fn kernel_grid(&self) -> Option<&KernelGrid<T>> {
        match &self.evaluator {
            Evaluator::Grid { deconv, .. } => Some(deconv),
            Evaluator::Exact => None,
        }
    }

    fn constants(&self) -> Result<AsymptoticConstants<T>> {
        let mut c = match self.constants {
            Some(c) => c,
            None => AsymptoticConstants::compute(&self.kernel, &self.model)?,
        };
        if let Some(d1) = self.config.d1_override {
            c.d1 = d1;
        }
        Ok(c)
    }

    /// `f_n`, `F_n`, `g_n`, `G_n` at the configured grid. Accepts any
    /// non-empty slice, including a single observation.
    pub fn kernel_sums(&self, observations: &[T]) -> Result<KernelSums<T>> {
        if observations.is_empty() {
            return Err(Error::InvalidSample("no observations".into()));
        }
        let h = self.config.bandwidth;
        let inv_h = T::one() / h;
        let n = T::usize(observations.len());
        let row = |x: T| -> Result<[T; 4]> {
            let mut acc = [T::zero(); 4];
            match &self.evaluator {
                Evaluator::Grid { deconv, plain } => {
                    debug_assert!(deconv.same_layout(plain));
                    for &y in observations {
                        let locus = deconv.locate((x - y) * inv_h);
                        acc[0] += deconv.w_located(locus);
                        acc[1] += deconv.m_located(locus);
                        acc[2] += plain.w_located(locus);
                        acc[3] += plain.m_located(locus);
                    }
                }
                Evaluator::Exact => {
                    let none = ErrorModel::none();
                    for &y in observations {
                        let u = (x - y) * inv_h;
                        acc[0] += deconv_kernel_point(&self.kernel, &self.model, h, u)?;
                        acc[1] += deconv_cdf_point(&self.kernel, &self.model, h, u)?;
                        acc[2] += plain_kernel_point(&self.kernel, u)?;
                        acc[3] += deconv_cdf_point(&self.kernel, &none, T::one(), u)?;
                    }
                }
            }
            Ok([acc[0] / (n * h), acc[1] / n, acc[2] / (n * h), acc[3] / n])
        };
        let rows: Vec<[T; 4]> = self
            .config
            .eval_grid
            .par_iter()
            .map(|&x| row(x))
            .collect::<Result<_>>()?;
        let mut sums = KernelSums {
            density: Vec::with_capacity(rows.len()),
            cdf: Vec::with_capacity(rows.len()),
            observed_density: Vec::with_capacity(rows.len()),
            observed_cdf: Vec::with_capacity(rows.len()),
        };
        for r in rows {
            sums.density.push(r[0]);
            sums.cdf.push(r[1]);
            sums.observed_density.push(r[2]);
            sums.observed_cdf.push(r[3]);
        }
        Ok(sums)
    }

    /// `λ_n` from `f_n` and `F_n` per the configured mode.
    pub fn hazard_from(&self, density: &[T], cdf: &[T]) -> Result<Vec<T>> {
        let eps = self.config.epsilon_guard;
        let clamp = self.config.clamp_negative_density;
        let f_of = |f: T| if clamp { f.max(T::zero()) } else { f };
        match self.config.hazard_mode {
            HazardMode::Regularized => Ok(density
                .iter()
                .zip(cdf)
                .map(|(&f, &big_f)| f_of(f) / (T::one() - big_f.min(T::one() - eps)))
                .collect()),
            HazardMode::Asymptotic => {
                let mut offending = Vec::new();
                let lambda: Vec<T> = density
                    .iter()
                    .zip(cdf)
                    .zip(&self.config.eval_grid)
                    .map(|((&f, &big_f), &x)| {
                        let denom = T::one() - big_f;
                        if denom < eps {
                            offending.push(x);
                            T::nan()
                        } else {
                            f_of(f) / denom
                        }
                    })
                    .collect();
                if offending.is_empty() {
                    Ok(lambda)
                } else {
                    Err(Error::DenominatorBelowGuard {
                        points: offending.iter().map(|x| x.to_f64_lossy()).collect(),
                        lambda: lambda.iter().map(|x| x.to_f64_lossy()).collect(),
                    })
                }
            }
        }
    }

    /// The full estimate: curves, plug-in variance, intervals and flags.
    pub fn estimate(&self, observations: &[T]) -> Result<HazardEstimate<T>> {
        let sums = self.kernel_sums(observations)?;
        let hazard = self.hazard_from(&sums.density, &sums.cdf)?;
        let constants = self.constants()?;
        let eps = self.config.epsilon_guard;
        let variance = plugin_variance(
            &sums.density,
            &sums.cdf,
            &sums.observed_density,
            &sums.observed_cdf,
            constants.d1,
            constants.d2,
            eps,
        )?;
        let sigma_sq: Vec<T> = variance.iter().map(|v| v.unwrap_or_else(T::nan)).collect();
        let beta = self.model.beta();
        let n = observations.len();
        let intervals = confidence_interval(
            &hazard,
            &sigma_sq,
            n,
            self.config.bandwidth,
            beta,
            self.config.confidence_level,
        )?;
        let mut flags = Vec::with_capacity(hazard.len());
        let mut ci_lower = Vec::with_capacity(hazard.len());
        let mut ci_upper = Vec::with_capacity(hazard.len());
        for (v, ci) in variance.iter().zip(&intervals) {
            let flag = match v {
                None => PointFlag::DenominatorBelowGuard,
                Some(s2) if !(*s2 > T::zero()) => PointFlag::NonPositiveVariance,
                Some(_) => PointFlag::Ok,
            };
            let (lo, hi) = match (flag, ci) {
                (PointFlag::Ok, Some((lo, hi))) => (*lo, *hi),
                _ => (T::nan(), T::nan()),
            };
            flags.push(flag);
            ci_lower.push(lo);
            ci_upper.push(hi);
        }
        Ok(HazardEstimate {
            grid: self.config.eval_grid.clone(),
            density: sums.density,
            cdf: sums.cdf,
            hazard,
            observed_density: sums.observed_density,
            observed_cdf: sums.observed_cdf,
            sigma_sq,
            ci_lower,
            ci_upper,
            flags,
            bandwidth: self.config.bandwidth,
            n,
            beta,
            d1: constants.d1,
            d2: constants.d2,
        })
    }
}

/// `f_n` on the configured grid.
pub fn density_estimate<T: Scalar>(
    sample: &Sample<T>,
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    config: &EstimatorConfig<T>,
) -> Result<Vec<T>> {
    let est = DeconvolutionEstimator::new(kernel, model, config.clone())?;
    Ok(est.kernel_sums(sample.observations())?.density)
}

/// `F_n` on the configured grid, from the `M_h` representation.
pub fn cdf_estimate<T: Scalar>(
    sample: &Sample<T>,
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    config: &EstimatorConfig<T>,
) -> Result<Vec<T>> {
    let est = DeconvolutionEstimator::new(kernel, model, config.clone())?;
    Ok(est.kernel_sums(sample.observations())?.cdf)
}

pub fn hazard_estimate<T: Scalar>(
    sample: &Sample<T>,
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    config: &EstimatorConfig<T>,
) -> Result<HazardEstimate<T>> {
    DeconvolutionEstimator::new(kernel, model, config.clone())?.estimate(sample.observations())
}

/// The plain kernel density estimate `g_n` of the observed law.
pub fn observed_density_estimate<T: Scalar>(
    sample: &Sample<T>,
    kernel: &SmoothKernel<T>,
    config: &EstimatorConfig<T>,
) -> Result<Vec<T>> {
    let est = DeconvolutionEstimator::new(kernel, &ErrorModel::none(), config.clone())?;
    Ok(est.kernel_sums(sample.observations())?.observed_density)
}

/// The integrated kernel estimate `G_n` of the observed distribution.
pub fn observed_cdf_estimate<T: Scalar>(
    sample: &Sample<T>,
    kernel: &SmoothKernel<T>,
    config: &EstimatorConfig<T>,
) -> Result<Vec<T>> {
    let est = DeconvolutionEstimator::new(kernel, &ErrorModel::none(), config.clone())?;
    Ok(est.kernel_sums(sample.observations())?.observed_cdf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Exp1, StandardNormal};

    fn fan() -> SmoothKernel<f64> {
        SmoothKernel::fan()
    }

    fn laplace(b: f64) -> ErrorModel<f64> {
        ErrorModel::laplace(b).unwrap()
    }

    fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
        x.windows(2).zip(y.windows(2)).map(|(a, b)| 0.5 * (a[1] - a[0]) * (b[0] + b[1])).sum()
    }

    fn normal_sample(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        (0..n).map(|_| StandardNormal.sample(&mut rng)).collect()
    }

    #[test]
    fn sample_validation() {
        assert!(Sample::new(vec![1.0]).is_err());
        assert!(Sample::new(vec![1.0, f64::NAN]).is_err());
        assert_eq!(Sample::new(vec![1.0, 2.0]).unwrap().len(), 2);
    }

    #[test]
    fn default_grid_has_601_points() {
        let c = EstimatorConfig::<f64>::new(0.3);
        assert_eq!(c.eval_grid.len(), 601);
        assert_eq!(c.eval_grid[600], 6.0);
        assert_eq!(c.eval_grid[50], 0.5);
    }

    #[test]
    fn config_validation() {
        let mut c = EstimatorConfig::<f64>::new(0.3);
        c.eval_grid = vec![0.0, 0.0];
        assert!(c.validate().is_err());
        assert!(EstimatorConfig::<f64>::new(-1.0).validate().is_err());
        let mut c = EstimatorConfig::<f64>::new(0.3);
        c.epsilon_guard = 1.0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn single_observation_density() {
        let h = 0.4;
        let m = laplace(0.3);
        let cfg = EstimatorConfig::new(h).with_grid(vec![0.0]);
        let est = DeconvolutionEstimator::new(&fan(), &m, cfg).unwrap();
        let f = est.kernel_sums(&[0.0]).unwrap();
        let w0 = deconv_kernel_point(&fan(), &m, h, 0.0).unwrap();
        assert!((f.density[0] - w0 / h).abs() < 1e-9);
        let k0 = 16.0 / 35.0 / std::f64::consts::PI;
        assert!((f.observed_density[0] - k0 / h).abs() < 1e-9);
    }

    #[test]
    fn density_integrates_to_one() {
        let y = normal_sample(300, 1);
        let grid = uniform_grid(-20.0, 20.0, 0.01).unwrap();
        let cfg = EstimatorConfig::new(0.3).with_grid(grid.clone());
        let s = Sample::new(y).unwrap();
        let f = density_estimate(&s, &fan(), &laplace(0.2), &cfg).unwrap();
        assert!((trapezoid(&grid, &f) - 1.0).abs() < 1e-3);
        let g = observed_density_estimate(&s, &fan(), &cfg).unwrap();
        assert!((trapezoid(&grid, &g) - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cdf_matches_integrated_density() {
        let y = normal_sample(200, 2);
        let grid = uniform_grid(-25.0, 25.0, 0.005).unwrap();
        let cfg = EstimatorConfig::new(0.35).with_grid(grid.clone());
        let s = Sample::new(y).unwrap();
        let est = DeconvolutionEstimator::new(&fan(), &laplace(0.25), cfg).unwrap();
        let sums = est.kernel_sums(s.observations()).unwrap();
        let mut running = 0.0;
        let mut worst = 0.0f64;
        for j in 1..grid.len() {
            running += 0.5 * (grid[j] - grid[j - 1]) * (sums.density[j] + sums.density[j - 1]);
            worst = worst.max((running - sums.cdf[j]).abs());
        }
        assert!(worst < 1e-3, "{worst}");
        let lo = sums.cdf[0];
        let hi = *sums.cdf.last().unwrap();
        assert!(lo.abs() < 1e-3 && (hi - 1.0).abs() < 1e-3, "{lo} {hi}");
    }

    #[test]
    fn near_zero_noise_matches_plain_kde() {
        let y = normal_sample(500, 3);
        let cfg = EstimatorConfig::new(0.3).with_grid(uniform_grid(-2.0, 2.0, 0.05).unwrap());
        let est = DeconvolutionEstimator::new(&fan(), &laplace(1e-5), cfg).unwrap();
        let sums = est.kernel_sums(&y).unwrap();
        for j in 0..sums.density.len() {
            assert!((sums.density[j] - sums.observed_density[j]).abs() < 1e-3);
            assert!((sums.cdf[j] - sums.observed_cdf[j]).abs() < 1e-3);
        }
    }

    #[test]
    fn grid_and_exact_evaluation_agree() {
        let y = normal_sample(12, 4);
        let grid = vec![-1.0, -0.2, 0.4, 1.7];
        let m = laplace(0.3);
        let base = EstimatorConfig::new(0.5).with_grid(grid);
        let fast = DeconvolutionEstimator::new(&fan(), &m, base.clone()).unwrap();
        let slow = DeconvolutionEstimator::new(&fan(), &m, base.with_kernel_eval(KernelEval::Exact))
            .unwrap();
        let a = fast.kernel_sums(&y).unwrap();
        let b = slow.kernel_sums(&y).unwrap();
        for j in 0..4 {
            assert!((a.density[j] - b.density[j]).abs() < 1e-5);
            assert!((a.cdf[j] - b.cdf[j]).abs() < 1e-5);
            assert!((a.observed_density[j] - b.observed_density[j]).abs() < 1e-5);
            assert!((a.observed_cdf[j] - b.observed_cdf[j]).abs() < 1e-5);
        }
    }

    #[test]
    fn observed_cdf_properties() {
        let y = normal_sample(5000, 5);
        let grid = uniform_grid(-8.0, 8.0, 0.05).unwrap();
        let cfg = EstimatorConfig::new(0.12).with_grid(grid.clone());
        let s = Sample::new(y.clone()).unwrap();
        let big_g = observed_cdf_estimate(&s, &fan(), &cfg).unwrap();
        assert!(big_g[0] < 1e-3 && (big_g.last().unwrap() - 1.0).abs() < 1e-3);
        let mut sorted = y.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let median = 0.5 * (sorted[2499] + sorted[2500]);
        let at_median = observed_cdf_estimate(
            &s,
            &fan(),
            &EstimatorConfig::new(0.12).with_grid(vec![median]),
        )
        .unwrap();
        assert!((at_median[0] - 0.5).abs() < 0.05);

        let g = observed_density_estimate(&s, &fan(), &cfg).unwrap();
        let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let sup = grid.iter().zip(&g).map(|(&x, &v)| (v - phi(x)).abs()).fold(0.0, f64::max);
        assert!(sup < 0.05, "{sup}");
    }

    #[test]
    fn hazard_modes() {
        let y = normal_sample(400, 6);
        let grid = uniform_grid(-6.0, 6.0, 0.1).unwrap();
        let m = laplace(0.2);
        let cfg = EstimatorConfig::new(0.4).with_grid(grid.clone());
        let est = DeconvolutionEstimator::new(&fan(), &m, cfg.clone()).unwrap();
        let e = est.estimate(&y).unwrap();
        assert!(e.hazard.iter().all(|v| v.is_finite()));
        // Left tail: denominator ≈ 1.
        assert!((e.hazard[0] - e.density[0]).abs() < 1e-6);

        let forced = est.hazard_from(&[0.3, 0.3], &[0.9999, 1.2]).unwrap();
        assert_eq!(forced, vec![0.3 / (1.0 - (1.0 - 1e-3)), 0.3 / (1.0 - (1.0 - 1e-3))]);

        let asym = DeconvolutionEstimator::new(&fan(), &m, cfg.with_mode(HazardMode::Asymptotic))
            .unwrap();
        match asym.estimate(&y) {
            Err(Error::DenominatorBelowGuard { points, lambda }) => {
                assert!(!points.is_empty());
                assert!(points.iter().all(|&x| x > 1.0));
                assert_eq!(lambda.len(), grid.len());
                assert!(lambda[0].is_finite());
            }
            other => panic!("expected guard error, got {other:?}"),
        }
    }

    #[test]
    fn estimate_flags_and_intervals() {
        let y = normal_sample(400, 7);
        let cfg = EstimatorConfig::new(0.4).with_grid(uniform_grid(-6.0, 6.0, 0.1).unwrap());
        let est = DeconvolutionEstimator::new(&fan(), &laplace(0.2), cfg).unwrap();
        let e = est.estimate(&y).unwrap();
        assert!(e.flags.contains(&PointFlag::DenominatorBelowGuard));
        for j in 0..e.grid.len() {
            match e.flags[j] {
                PointFlag::Ok => {
                    assert!(e.sigma_sq[j] > 0.0);
                    assert!(e.ci_lower[j] < e.hazard[j] && e.hazard[j] < e.ci_upper[j]);
                }
                PointFlag::DenominatorBelowGuard => {
                    assert!(e.sigma_sq[j].is_nan() && e.ci_lower[j].is_nan());
                }
                PointFlag::NonPositiveVariance => {
                    assert!(e.sigma_sq[j] <= 0.0 && e.ci_upper[j].is_nan());
                }
            }
        }
    }

    #[test]
    fn estimates_are_reproducible_with_constants_supplied() {
        let y = normal_sample(100, 8);
        let m = laplace(0.2);
        let cfg = EstimatorConfig::new(0.4).with_grid(vec![0.0, 0.5]);
        let c = AsymptoticConstants::compute(&fan(), &m).unwrap();
        let a = DeconvolutionEstimator::new(&fan(), &m, cfg.clone()).unwrap().estimate(&y).unwrap();
        let b = DeconvolutionEstimator::new(&fan(), &m, cfg)
            .unwrap()
            .with_constants(c)
            .estimate(&y)
            .unwrap();
        // Debug formatting compares NaN entries too.
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
    }

    #[test]
    fn exponential_hazard_is_recovered() {
        // Exponential lifetimes with Laplace noise at NSR 0.1, b = 0.1/√2.
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let b = 0.1 / 2f64.sqrt();
        let y: Vec<f64> = (0..5000)
            .map(|_| {
                let x: f64 = Exp1.sample(&mut rng);
                let e: f64 = Exp1.sample(&mut rng);
                let sign = if rng.random::<bool>() { -1.0 } else { 1.0 };
                x + sign * b * e
            })
            .collect();
        let grid = uniform_grid(0.5, 2.5, 0.05).unwrap();
        let cfg = EstimatorConfig::new(0.1).with_grid(grid);
        let e = DeconvolutionEstimator::new(&fan(), &laplace(b), cfg).unwrap().estimate(&y).unwrap();
        let mean = e.hazard.iter().sum::<f64>() / e.hazard.len() as f64;
        assert!((mean - 1.0).abs() < 0.15, "{mean}");
    }

    #[test]
    fn single_precision_estimator() {
        let y: Vec<f32> = normal_sample(200, 10).iter().map(|&v| v as f32).collect();
        let cfg = EstimatorConfig::<f32>::new(0.4).with_grid(uniform_grid(-1.0f32, 1.0, 0.5).unwrap());
        let k = SmoothKernel::<f32>::fan();
        let m = ErrorModel::laplace(0.2f32).unwrap();
        let e = DeconvolutionEstimator::new(&k, &m, cfg).unwrap().estimate(&y).unwrap();
        assert_eq!(e.grid.len(), 5);
        assert!(e.density.iter().all(|v| v.is_finite()));
    }
}
