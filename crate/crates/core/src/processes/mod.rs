//! Seeded generators for the latent lifetimes and their Laplace
//! contamination.
//!
//! Every draw is a pure function of `(spec, n, seed)`. The latent sequence
//! uses stream 0 of a ChaCha20 generator keyed by the seed and the noise uses
//! stream 1, so re-drawing the noise never perturbs the latent values.

mod io;

pub use io::{read_sample_file, write_sample_file, SampleFile};

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use rustfft::FftPlanner;
use statrs::function::gamma::gamma;

use crate::estimators::{Provenance, Sample};
use crate::{Error, Result};

/// Recorded in every manifest and sample header.
pub const RNG_ALGORITHM: &str = "ChaCha20 (rand_chacha 0.9); seed_from_u64(splitmix64 hash of \
     master seed and cell key); stream 0 latent, stream 1 noise";

/// Coefficient tail the default MA truncation must reach.
pub const MA_TAIL_TOLERANCE: f64 = 1e-6;

/// Largest MA truncation accepted without an explicit override.
const MA_MAX_TRUNCATION: usize = 50_000_000;

/// Direct convolution is used below this many multiply-adds.
const MA_DIRECT_LIMIT: usize = 20_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LogNormalNormalization {
    /// `Z_j = (ε_{j-1} + ε_{j-2}) / 2`, so `ln X ~ N(0, 1/2)`.
    PaperLiteral,
    /// `Z_j = (ε_{j-1} + ε_{j-2}) / √2`, so `X ~ LogNormal(0, 1)`.
    #[default]
    UnitVariance,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScenarioKind {
    Ar1 { phi: f64 },
    TruncatedMaInf { delta: f64, truncation: usize },
    LogNormalMa { normalization: LogNormalNormalization },
    WeibullIid { shape: f64, scale: f64 },
}

/// A validated latent scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    kind: ScenarioKind,
    label: String,
}

impl ScenarioSpec {
    pub fn ar1(phi: f64) -> Result<Self> {
        if !(phi > 0.0 && phi < 1.0) {
            return Err(Error::invalid(format!("AR(1) coefficient must lie in (0, 1), got {phi}")));
        }
        Ok(Self::labelled(ScenarioKind::Ar1 { phi }))
    }

    /// MA(∞) with `α_i = (i+1)^{-δ}`, truncated at the smallest `T` whose
    /// coefficient tail is below [`MA_TAIL_TOLERANCE`] unless `truncation` is
    /// given.
    pub fn truncated_ma(delta: f64, truncation: Option<usize>) -> Result<Self> {
        if !(delta > 1.5) || !delta.is_finite() {
            return Err(Error::invalid(format!("MA decay exponent must exceed 3/2, got {delta}")));
        }
        let truncation = match truncation {
            Some(0) => return Err(Error::invalid("MA truncation must be positive")),
            Some(t) => t,
            None => default_ma_truncation(delta)?,
        };
        Ok(Self::labelled(ScenarioKind::TruncatedMaInf { delta, truncation }))
    }

    pub fn lognormal_ma(normalization: LogNormalNormalization) -> Self {
        Self::labelled(ScenarioKind::LogNormalMa { normalization })
    }

    pub fn weibull(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0) || !(scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
            return Err(Error::invalid(format!(
                "Weibull shape and scale must be positive, got ({shape}, {scale})"
            )));
        }
        Ok(Self::labelled(ScenarioKind::WeibullIid { shape, scale }))
    }

    fn labelled(kind: ScenarioKind) -> Self {
        let label = canonical_name(&kind);
        Self { kind, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn kind(&self) -> ScenarioKind {
        self.kind
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// The parseable form, e.g. `weibull(1.5,1)`.
    pub fn canonical(&self) -> String {
        canonical_name(&self.kind)
    }
}

fn canonical_name(kind: &ScenarioKind) -> String {
    match *kind {
        ScenarioKind::Ar1 { phi } => format!("ar1({phi})"),
        ScenarioKind::TruncatedMaInf { delta, truncation } => format!("ma({delta},{truncation})"),
        ScenarioKind::LogNormalMa { normalization: LogNormalNormalization::UnitVariance } => {
            "lognormal".to_string()
        }
        ScenarioKind::LogNormalMa { normalization: LogNormalNormalization::PaperLiteral } => {
            "lognormal-literal".to_string()
        }
        ScenarioKind::WeibullIid { shape, scale } => format!("weibull({shape},{scale})"),
    }
}

impl fmt::Display for ScenarioSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label)
    }
}

impl FromStr for ScenarioSpec {
    type Err = Error;

    /// Accepts `weibull(a,b)`, `lognormal`, `lognormal-literal`, `ar1(phi)`,
    /// `ma(delta)` and `ma(delta,truncation)`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (name, args) = match s.find('(') {
            Some(open) => {
                let close = s
                    .strip_suffix(')')
                    .ok_or_else(|| Error::invalid(format!("unbalanced parentheses in '{s}'")))?;
                (&s[..open], &close[open + 1..])
            }
            None => (s, ""),
        };
        let numbers: Vec<f64> = if args.trim().is_empty() {
            Vec::new()
        } else {
            args.split(',')
                .map(|a| {
                    a.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::invalid(format!("bad number '{a}' in scenario '{s}'")))
                })
                .collect::<Result<_>>()?
        };
        let arity = |want: &[usize]| -> Result<()> {
            if want.contains(&numbers.len()) {
                Ok(())
            } else {
                Err(Error::invalid(format!("wrong number of parameters in scenario '{s}'")))
            }
        };
        match name.trim().to_ascii_lowercase().as_str() {
            "weibull" => {
                arity(&[2])?;
                Self::weibull(numbers[0], numbers[1])
            }
            "ar1" => {
                arity(&[1])?;
                Self::ar1(numbers[0])
            }
            "ma" => {
                arity(&[1, 2])?;
                let truncation = match numbers.get(1) {
                    Some(&t) if t >= 1.0 && t.fract() == 0.0 => Some(t as usize),
                    Some(&t) => {
                        return Err(Error::invalid(format!("MA truncation must be a positive integer, got {t}")))
                    }
                    None => None,
                };
                Self::truncated_ma(numbers[0], truncation)
            }
            "lognormal" => {
                arity(&[0])?;
                Ok(Self::lognormal_ma(LogNormalNormalization::UnitVariance))
            }
            "lognormal-literal" => {
                arity(&[0])?;
                Ok(Self::lognormal_ma(LogNormalNormalization::PaperLiteral))
            }
            other => Err(Error::invalid(format!("unknown scenario '{other}'"))),
        }
    }
}

/// Smallest `T` with `Σ_{i>T} (i+1)^{-δ} < 1e-6`, using the integral bound
/// `(T+1)^{1-δ} / (δ-1)` on the tail.
fn default_ma_truncation(delta: f64) -> Result<usize> {
    let t_plus_one = (MA_TAIL_TOLERANCE * (delta - 1.0)).powf(1.0 / (1.0 - delta));
    let mut t = t_plus_one.ceil().max(1.0);
    if !(t <= MA_MAX_TRUNCATION as f64) {
        return Err(Error::invalid(format!(
            "MA(∞) with δ = {delta} needs a truncation of about {t_plus_one:.3e} to reach a \
             coefficient tail of {MA_TAIL_TOLERANCE:e}; pass an explicit truncation"
        )));
    }
    // Guard the floating-point boundary.
    while t > 1.0 && ma_tail_bound(delta, t as usize - 1) < MA_TAIL_TOLERANCE {
        t -= 1.0;
    }
    while ma_tail_bound(delta, t as usize) >= MA_TAIL_TOLERANCE {
        t += 1.0;
    }
    Ok(t as usize)
}

fn ma_tail_bound(delta: f64, truncation: usize) -> f64 {
    ((truncation + 1) as f64).powf(1.0 - delta) / (delta - 1.0)
}

/// Coefficients `α_0..α_T`.
pub fn ma_coefficients(delta: f64, truncation: usize) -> Vec<f64> {
    (0..=truncation).map(|i| ((i + 1) as f64).powf(-delta)).collect()
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for one replication of one cell: the key components are folded into
/// the master seed one at a time through SplitMix64.
pub fn derive_seed(master: u64, key: &[u64]) -> u64 {
    key.iter().fold(splitmix64(master), |acc, &k| splitmix64(acc ^ splitmix64(k)))
}

fn normals(rng: &mut ChaCha20Rng, count: usize) -> Vec<f64> {
    (0..count).map(|_| StandardNormal.sample(rng)).collect()
}

fn open_uniform(rng: &mut ChaCha20Rng) -> f64 {
    Open01.sample(rng)
}

/// A stationary draw of length `n` from the scenario.
pub fn generate_latent(spec: &ScenarioSpec, n: usize, seed: u64) -> Result<Vec<f64>> {
    if n < 2 {
        return Err(Error::invalid(format!("need n ≥ 2, got {n}")));
    }
    let mut rng = stream_rng(seed, 0);
    Ok(match spec.kind {
        ScenarioKind::Ar1 { phi } => {
            let mut x = Vec::with_capacity(n);
            let z: f64 = StandardNormal.sample(&mut rng);
            let mut prev = z / (1.0 - phi * phi).sqrt();
            x.push(prev);
            for _ in 1..n {
                let e: f64 = StandardNormal.sample(&mut rng);
                prev = phi * prev + e;
                x.push(prev);
            }
            x
        }
        ScenarioKind::TruncatedMaInf { delta, truncation } => {
            let alpha = ma_coefficients(delta, truncation);
            let eps = normals(&mut rng, n + truncation);
            moving_average(&alpha, &eps, n)
        }
        ScenarioKind::LogNormalMa { normalization } => {
            let divisor = match normalization {
                LogNormalNormalization::PaperLiteral => 2.0,
                LogNormalNormalization::UnitVariance => std::f64::consts::SQRT_2,
            };
            let eps = normals(&mut rng, n + 1);
            eps.windows(2).map(|w| ((w[0] + w[1]) / divisor).exp()).collect()
        }
        ScenarioKind::WeibullIid { shape, scale } => (0..n)
            .map(|_| scale * (-open_uniform(&mut rng).ln()).powf(1.0 / shape))
            .collect(),
    })
}

/// `X_j = Σ_i α_i ε_{j+T-i}` for `j < n`, where `eps` has `n + T` entries
/// (`ε` with index shifted by the truncation `T = alpha.len() - 1`).
fn moving_average(alpha: &[f64], eps: &[f64], n: usize) -> Vec<f64> {
    let t = alpha.len() - 1;
    debug_assert_eq!(eps.len(), n + t);
    if alpha.len().saturating_mul(n) <= MA_DIRECT_LIMIT {
        return (0..n)
            .map(|j| alpha.iter().enumerate().map(|(i, a)| a * eps[j + t - i]).sum())
            .collect();
    }
    let len = (eps.len() + alpha.len()).next_power_of_two();
    let mut a: Vec<Complex<f64>> = alpha.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(len, Complex::new(0.0, 0.0));
    let mut e: Vec<Complex<f64>> = eps.iter().map(|&v| Complex::new(v, 0.0)).collect();
    e.resize(len, Complex::new(0.0, 0.0));
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(len);
    forward.process(&mut a);
    forward.process(&mut e);
    for (x, y) in e.iter_mut().zip(&a) {
        *x *= y;
    }
    planner.plan_fft_inverse(len).process(&mut e);
    let scale = 1.0 / len as f64;
    (0..n).map(|j| e[j + t].re * scale).collect()
}

/// Laplace noise calibrated to a noise-to-signal ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub nsr: f64,
    pub sigma_x: f64,
    /// `b = nsr · σ_X / √2`, so that `sd(e) = √2 b = nsr · σ_X`.
    pub scale: f64,
}

impl NoiseSpec {
    /// `nsr = 0` is allowed and means no contamination.
    pub fn new(nsr: f64, sigma_x: f64) -> Result<Self> {
        if !(nsr >= 0.0) || !nsr.is_finite() {
            return Err(Error::invalid(format!("NSR must be non-negative, got {nsr}")));
        }
        if !(sigma_x > 0.0) || !sigma_x.is_finite() {
            return Err(Error::invalid(format!("latent sd must be positive, got {sigma_x}")));
        }
        Ok(Self { nsr, sigma_x, scale: nsr * sigma_x / std::f64::consts::SQRT_2 })
    }

    pub fn is_noiseless(&self) -> bool {
        self.scale == 0.0
    }
}

/// `Y_i = X_i + e_i` with `e_i` i.i.d. Laplace(0, b) from the noise stream.
pub fn contaminate(latent: &[f64], noise: &NoiseSpec, seed: u64) -> Result<Sample<f64>> {
    if noise.is_noiseless() {
        return Sample::new(latent.to_vec());
    }
    let mut rng = stream_rng(seed, 1);
    let b = noise.scale;
    let y = latent
        .iter()
        .map(|&x| {
            let u = open_uniform(&mut rng) - 0.5;
            x - b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
        })
        .collect();
    Sample::new(y)
}

/// Latent draw plus contamination at `nsr`, with provenance attached.
pub fn draw_sample(spec: &ScenarioSpec, n: usize, nsr: f64, seed: u64) -> Result<Sample<f64>> {
    let latent = generate_latent(spec, n, seed)?;
    let noise = NoiseSpec::new(nsr, latent_sigma(spec))?;
    Ok(contaminate(&latent, &noise, seed)?.with_provenance(Provenance {
        scenario: spec.canonical(),
        seed,
        nsr,
    }))
}

/// Standard deviation of the latent marginal.
pub fn latent_sigma(spec: &ScenarioSpec) -> f64 {
    match spec.kind {
        ScenarioKind::Ar1 { phi } => 1.0 / (1.0 - phi * phi).sqrt(),
        ScenarioKind::TruncatedMaInf { delta, truncation } => {
            ma_coefficients(delta, truncation).iter().map(|a| a * a).sum::<f64>().sqrt()
        }
        ScenarioKind::LogNormalMa { normalization } => {
            let s2 = log_variance(normalization);
            ((s2.exp() - 1.0) * s2.exp()).sqrt()
        }
        ScenarioKind::WeibullIid { shape, scale } => {
            let g1 = gamma(1.0 + 1.0 / shape);
            scale * (gamma(1.0 + 2.0 / shape) - g1 * g1).sqrt()
        }
    }
}

/// Variance of `ln X` for the log-normal scenario.
pub fn log_variance(normalization: LogNormalNormalization) -> f64 {
    match normalization {
        LogNormalNormalization::PaperLiteral => 0.5,
        LogNormalNormalization::UnitVariance => 1.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(x: &[f64]) -> f64 {
        x.iter().sum::<f64>() / x.len() as f64
    }

    fn autocov(x: &[f64], lag: usize) -> f64 {
        let m = mean(x);
        let n = x.len() - lag;
        (0..n).map(|i| (x[i] - m) * (x[i + lag] - m)).sum::<f64>() / n as f64
    }

    #[test]
    fn spec_validation() {
        assert!(ScenarioSpec::ar1(0.0).is_err());
        assert!(ScenarioSpec::ar1(1.0).is_err());
        assert!(ScenarioSpec::truncated_ma(1.5, None).is_err());
        assert!(ScenarioSpec::truncated_ma(2.0, Some(0)).is_err());
        assert!(ScenarioSpec::weibull(0.0, 1.0).is_err());
        assert!(ScenarioSpec::weibull(1.0, -1.0).is_err());
        // δ barely above 3/2 needs an impractical truncation.
        assert!(ScenarioSpec::truncated_ma(1.6, None).is_err());
        assert!(ScenarioSpec::truncated_ma(1.6, Some(5000)).is_ok());
    }

    #[test]
    fn parse_round_trip() {
        for s in ["weibull(1.5,1)", "ar1(0.5)", "lognormal", "lognormal-literal", "ma(3,200)"] {
            let spec: ScenarioSpec = s.parse().unwrap();
            assert_eq!(spec.canonical(), s);
            let again: ScenarioSpec = spec.canonical().parse().unwrap();
            assert_eq!(again, spec);
        }
        assert!("weibull(1)".parse::<ScenarioSpec>().is_err());
        assert!("gamma(2,1)".parse::<ScenarioSpec>().is_err());
        assert!("ar1(0.5".parse::<ScenarioSpec>().is_err());
        assert!("ma(3,2.5)".parse::<ScenarioSpec>().is_err());
    }

    #[test]
    fn default_truncation_meets_tail_tolerance() {
        for delta in [2.0, 2.5, 3.0, 4.0] {
            let spec = ScenarioSpec::truncated_ma(delta, None).unwrap();
            let ScenarioKind::TruncatedMaInf { truncation, .. } = spec.kind() else { panic!() };
            assert!(ma_tail_bound(delta, truncation) < MA_TAIL_TOLERANCE);
            assert!(ma_tail_bound(delta, truncation - 1) >= MA_TAIL_TOLERANCE);
        }
        // δ = 3: Σ_{i≥0} (i+1)^{-3} = ζ(3).
        let spec = ScenarioSpec::truncated_ma(3.0, None).unwrap();
        let ScenarioKind::TruncatedMaInf { truncation, .. } = spec.kind() else { panic!() };
        let partial: f64 = ma_coefficients(3.0, truncation).iter().rev().sum();
        let zeta3 = 1.202_056_903_159_594_3;
        assert!((zeta3 - partial).abs() < 1e-6);
    }

    #[test]
    fn determinism_and_stream_independence() {
        let spec = ScenarioSpec::weibull(1.5, 1.0).unwrap();
        let a = generate_latent(&spec, 100, 42).unwrap();
        let b = generate_latent(&spec, 100, 42).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, generate_latent(&spec, 100, 43).unwrap());
        let noise = NoiseSpec::new(0.1, latent_sigma(&spec)).unwrap();
        let y1 = contaminate(&a, &noise, 1).unwrap();
        let y2 = contaminate(&a, &noise, 2).unwrap();
        assert_ne!(y1.observations(), y2.observations());
        assert_eq!(a, generate_latent(&spec, 100, 42).unwrap());
        // The noise stream is not the latent stream.
        let mut r0 = stream_rng(42, 0);
        let mut r1 = stream_rng(42, 1);
        assert_ne!(open_uniform(&mut r0), open_uniform(&mut r1));
    }

    #[test]
    fn noiseless_contamination_is_identity() {
        let x = vec![0.3, 1.2, 2.5];
        let noise = NoiseSpec::new(0.0, 1.0).unwrap();
        assert_eq!(contaminate(&x, &noise, 5).unwrap().observations(), &x[..]);
        assert!(NoiseSpec::new(-0.1, 1.0).is_err());
    }

    #[test]
    fn ar1_stationary_covariance() {
        let spec = ScenarioSpec::ar1(0.5).unwrap();
        let x = generate_latent(&spec, 1_000_000, 11).unwrap();
        let var = 1.0 / 0.75;
        let gamma = |m: i64| var * 0.5f64.powi(m.unsigned_abs() as i32);
        for k in 1..=3i64 {
            // Bartlett: n Var(γ̂_k) ≈ Σ_m γ_m² + γ_{m+k} γ_{m-k}.
            let bartlett: f64 = (-200..=200).map(|m| gamma(m).powi(2) + gamma(m + k) * gamma(m - k)).sum();
            let se = (bartlett / 1e6).sqrt();
            assert!((autocov(&x, k as usize) - gamma(k)).abs() < 3.0 * se, "lag {k}");
        }
        assert!((latent_sigma(&spec) - (4.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn weibull_exponential_mean() {
        let spec = ScenarioSpec::weibull(1.0, 1.0).unwrap();
        let x = generate_latent(&spec, 1_000_000, 12).unwrap();
        assert!((mean(&x) - 1.0).abs() < 0.01);
        assert!((latent_sigma(&spec) - 1.0).abs() < 1e-14);
        // scipy.stats.weibull_min(1.5).std()
        let s = latent_sigma(&ScenarioSpec::weibull(1.5, 1.0).unwrap());
        assert!((s - 0.612_935_791_754_676_4).abs() < 1e-12, "{s}");
        let s2 = latent_sigma(&ScenarioSpec::weibull(2.0, 1.0).unwrap());
        assert!((s2 - 0.463_251_375_176_104_4).abs() < 1e-12, "{s2}");
    }

    #[test]
    fn lognormal_log_variance() {
        let spec = ScenarioSpec::lognormal_ma(LogNormalNormalization::UnitVariance);
        let logs: Vec<f64> = generate_latent(&spec, 1_000_000, 13).unwrap().iter().map(|v| v.ln()).collect();
        let m = mean(&logs);
        let v = logs.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / logs.len() as f64;
        assert!((v - 1.0).abs() < 0.01, "{v}");
        let e = std::f64::consts::E;
        assert!((latent_sigma(&spec) - ((e - 1.0) * e).sqrt()).abs() < 1e-14);

        let lit = ScenarioSpec::lognormal_ma(LogNormalNormalization::PaperLiteral);
        let logs: Vec<f64> = generate_latent(&lit, 200_000, 13).unwrap().iter().map(|v| v.ln()).collect();
        let m = mean(&logs);
        let v = logs.iter().map(|l| (l - m) * (l - m)).sum::<f64>() / logs.len() as f64;
        assert!((v - 0.5).abs() < 0.01, "{v}");
    }

    #[test]
    fn nsr_definition() {
        let spec = ScenarioSpec::weibull(1.5, 1.0).unwrap();
        let x = generate_latent(&spec, 1_000_000, 14).unwrap();
        let noise = NoiseSpec::new(0.25, latent_sigma(&spec)).unwrap();
        let y = contaminate(&x, &noise, 14).unwrap();
        let e: Vec<f64> = y.observations().iter().zip(&x).map(|(a, b)| a - b).collect();
        let sd = |v: &[f64]| {
            let m = mean(v);
            (v.iter().map(|a| (a - m) * (a - m)).sum::<f64>() / v.len() as f64).sqrt()
        };
        assert!((sd(&e) / sd(&x) - 0.25).abs() < 0.01);
    }

    #[test]
    fn laplace_empirical_cf() {
        let n = 200_000;
        let x = vec![0.0; n];
        let noise = NoiseSpec::new(1.0, std::f64::consts::SQRT_2).unwrap();
        assert_eq!(noise.scale, 1.0);
        let y = contaminate(&x, &noise, 15).unwrap();
        let c: Vec<f64> = y.observations().iter().map(|e| e.cos()).collect();
        let m = mean(&c);
        let se = (c.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64 / n as f64).sqrt();
        assert!((m - 0.5).abs() < 3.0 * se, "{m} ± {se}");
    }

    #[test]
    fn positive_association_smoke() {
        for spec in [
            ScenarioSpec::ar1(0.5).unwrap(),
            ScenarioSpec::lognormal_ma(LogNormalNormalization::UnitVariance),
        ] {
            let reps = 100_000;
            let pairs: Vec<(f64, f64)> = (0..reps)
                .map(|r| {
                    let x = generate_latent(&spec, 2, derive_seed(99, &[r])).unwrap();
                    (x[0], x[1])
                })
                .collect();
            let m0 = pairs.iter().map(|p| p.0).sum::<f64>() / reps as f64;
            let m1 = pairs.iter().map(|p| p.1).sum::<f64>() / reps as f64;
            let prods: Vec<f64> = pairs.iter().map(|p| (p.0 - m0) * (p.1 - m1)).collect();
            let cov = mean(&prods);
            let sd = (prods.iter().map(|v| (v - cov) * (v - cov)).sum::<f64>() / reps as f64).sqrt();
            assert!(cov > 5.0 * sd / (reps as f64).sqrt(), "{spec}: {cov}");
        }
    }

    #[test]
    fn ma_fft_path_matches_direct_sum() {
        let alpha = ma_coefficients(2.0, 3000);
        let n = 7000;
        let eps = normals(&mut stream_rng(3, 0), n + 3000);
        let fast = moving_average(&alpha, &eps, n);
        for j in [0, 1, 2500, n - 1] {
            let direct: f64 = alpha.iter().enumerate().map(|(i, a)| a * eps[j + 3000 - i]).sum();
            assert!((fast[j] - direct).abs() < 1e-10);
        }
        let spec = ScenarioSpec::truncated_ma(2.0, Some(50)).unwrap();
        let sigma = latent_sigma(&spec);
        let direct: f64 = ma_coefficients(2.0, 50).iter().map(|a| a * a).sum::<f64>().sqrt();
        assert_eq!(sigma, direct);
    }

    #[test]
    fn seed_derivation_separates_keys() {
        let a = derive_seed(1, &[0, 0, 0]);
        assert_ne!(a, derive_seed(1, &[0, 0, 1]));
        assert_ne!(a, derive_seed(1, &[1, 0, 0]));
        assert_ne!(a, derive_seed(2, &[0, 0, 0]));
        assert_ne!(derive_seed(1, &[0, 1]), derive_seed(1, &[1, 0]));
        assert_eq!(a, derive_seed(1, &[0, 0, 0]));
    }
}
