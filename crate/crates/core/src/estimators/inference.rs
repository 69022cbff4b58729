use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Error, Result, Scalar};

/// `Φ^{-1}(p)` for the standard normal.
pub fn normal_quantile<T: Scalar>(p: T) -> Result<T> {
    if !(p > T::zero() && p < T::one()) {
        return Err(Error::invalid(format!("probability must lie in (0, 1), got {p}")));
    }
    let z = Normal::standard().inverse_cdf(p.to_f64_lossy());
    Ok(T::lit(z))
}

/// Plug-in estimate of the asymptotic hazard variance,
///
/// ```text
/// σ_n² = D2 g/(1-F)² - 2 D2 f G/(1-F)³ + D1² f² G(1-G)/(1-F)⁴,
/// ```
///
/// evaluated pointwise. Points where `1 - F_n < guard` get `None`.
#[allow(clippy::too_many_arguments)]
pub fn plugin_variance<T: Scalar>(
    f_n: &[T],
    cdf_n: &[T],
    g_n: &[T],
    obs_cdf_n: &[T],
    d1: T,
    d2: T,
    guard: T,
) -> Result<Vec<Option<T>>> {
    let len = f_n.len();
    if cdf_n.len() != len || g_n.len() != len || obs_cdf_n.len() != len {
        return Err(Error::LengthMismatch(format!(
            "plug-in variance inputs have lengths {}, {}, {}, {}",
            len,
            cdf_n.len(),
            g_n.len(),
            obs_cdf_n.len()
        )));
    }
    let two = T::lit(2.0);
    Ok((0..len)
        .map(|j| {
            let survival = T::one() - cdf_n[j];
            if !(survival >= guard) {
                return None;
            }
            let (f, g, big_g) = (f_n[j], g_n[j], obs_cdf_n[j]);
            let s2 = survival * survival;
            let first = d2 * g / s2;
            let second = two * d2 * f * big_g / (s2 * survival);
            let third = d1 * d1 * f * f * big_g * (T::one() - big_g) / (s2 * s2);
            Some(first - second + third)
        })
        .collect())
}

/// Symmetric intervals `λ ± z σ / √(n h^{2β})` at the given level.
///
/// `σ² = 0` gives the degenerate interval `[λ, λ]`; negative or non-finite
/// `σ²` gives `None`.
pub fn confidence_interval<T: Scalar>(
    lambda_n: &[T],
    sigma_n_sq: &[T],
    n: usize,
    h: T,
    beta: u32,
    level: T,
) -> Result<Vec<Option<(T, T)>>> {
    if lambda_n.len() != sigma_n_sq.len() {
        return Err(Error::LengthMismatch(format!(
            "{} hazard values against {} variances",
            lambda_n.len(),
            sigma_n_sq.len()
        )));
    }
    if n == 0 || !(h > T::zero()) {
        return Err(Error::invalid("confidence interval needs n ≥ 1 and h > 0"));
    }
    let z = critical_value(level)?;
    let scale = (T::usize(n) * h.powi(2 * beta as i32)).sqrt();
    Ok(lambda_n
        .iter()
        .zip(sigma_n_sq)
        .map(|(&lambda, &s2)| {
            if !(s2 >= T::zero()) || !lambda.is_finite() || !s2.is_finite() {
                return None;
            }
            let half = z * s2.sqrt() / scale;
            Some((lambda - half, lambda + half))
        })
        .collect())
}

/// Two-sided critical value `z_{1-ζ/2}` for confidence level `1 - ζ`.
pub fn critical_value<T: Scalar>(level: T) -> Result<T> {
    if !(level > T::zero() && level < T::one()) {
        return Err(Error::invalid(format!("confidence level must lie in (0, 1), got {level}")));
    }
    let half = T::lit(0.5);
    normal_quantile(half + level * half)
}

/// Rule-of-thumb bandwidth `c · sd(Y) · n^{-1/(2β+5)}`.
pub fn default_bandwidth<T: Scalar>(observations: &[T], beta: u32, c: T) -> Result<T> {
    let n = observations.len();
    if n < 2 {
        return Err(Error::InvalidSample("default bandwidth needs at least 2 observations".into()));
    }
    if !(c > T::zero()) || !c.is_finite() {
        return Err(Error::invalid(format!("bandwidth constant must be positive, got {c}")));
    }
    let sd = sample_sd(observations);
    if !(sd > T::zero()) || !sd.is_finite() {
        return Err(Error::Degenerate("sample has zero variance".into()));
    }
    let exponent = -T::one() / T::usize(2 * beta as usize + 5);
    Ok(c * sd * T::usize(n).powf(exponent))
}

/// Sample standard deviation with the `n - 1` divisor.
pub fn sample_sd<T: Scalar>(values: &[T]) -> T {
    let n = T::usize(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let ss: T = values.iter().map(|&v| (v - mean) * (v - mean)).sum();
    (ss / (n - T::one())).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Φ from the Maclaurin series of erf; fine for moderate arguments.
    fn phi_series(x: f64) -> f64 {
        let z = x / std::f64::consts::SQRT_2;
        let mut term = z;
        let mut sum = z;
        for k in 1..200 {
            term *= -z * z / k as f64;
            sum += term / (2 * k + 1) as f64;
        }
        0.5 + sum / std::f64::consts::PI.sqrt()
    }

    #[test]
    fn quantile_at_95_percent() {
        let z: f64 = critical_value(0.95).unwrap();
        assert!((z - 1.959964).abs() < 1e-5);
        assert!((phi_series(z) - 0.975).abs() < 1e-13);
        let z90: f64 = critical_value(0.90).unwrap();
        assert!((phi_series(z90) - 0.95).abs() < 1e-13);
        assert!(normal_quantile(1.0f64).is_err());
        assert_eq!(normal_quantile(0.5f64).unwrap(), 0.0);
    }

    #[test]
    fn variance_reduces_when_density_vanishes() {
        let v = plugin_variance(&[0.0], &[0.3], &[0.2], &[0.4], 0.7, 1e-3, 1e-3).unwrap();
        let expect = 1e-3 * 0.2 / (0.7f64 * 0.7);
        assert!((v[0].unwrap() - expect).abs() < 1e-18);
    }

    #[test]
    fn zero_d1_removes_third_term() {
        let (f, big_f, g, big_g, d2) = (0.4, 0.25, 0.3, 0.35, 2e-3);
        let v = plugin_variance(&[f], &[big_f], &[g], &[big_g], 0.0, d2, 1e-3).unwrap();
        let s: f64 = 1.0 - big_f;
        let expect = d2 * g / s.powi(2) - 2.0 * d2 * f * big_g / s.powi(3);
        assert!((v[0].unwrap() - expect).abs() < 1e-17);
    }

    #[test]
    fn full_formula_against_rederivation() {
        // σ² = [D2 g (1-F)² - 2 D2 f G (1-F) + D1² f² G(1-G)] / (1-F)⁴
        let pts = [
            (0.31, 0.12, 0.28, 0.15, 0.9, 1.3e-3),
            (-0.05, 0.44, 0.35, 0.47, 0.2, 4.0e-3),
            (1.2, 0.71, 0.9, 0.66, 1.0, 1.0e-2),
            (0.02, 0.05, 0.03, 0.06, 0.5, 7.0e-4),
            (0.6, 0.93, 0.58, 0.88, 0.05, 2.2e-3),
        ];
        for &(f, big_f, g, big_g, d1, d2) in &pts {
            let v = plugin_variance(&[f], &[big_f], &[g], &[big_g], d1, d2, 1e-3).unwrap()[0]
                .unwrap();
            let s: f64 = 1.0 - big_f;
            let num = d2 * g * s * s - 2.0 * d2 * f * big_g * s + d1 * d1 * f * f * big_g * (1.0 - big_g);
            let expect = num / s.powi(4);
            assert!((v - expect).abs() <= 1e-12 * expect.abs().max(1.0), "{v} vs {expect}");
        }
    }

    #[test]
    fn variance_flags_small_survival() {
        let v = plugin_variance(&[0.1, 0.1], &[0.5, 0.9995], &[0.1, 0.1], &[0.5, 0.9], 0.0, 1e-3, 1e-3)
            .unwrap();
        assert!(v[0].is_some());
        assert!(v[1].is_none());
        assert!(plugin_variance(&[0.1], &[0.5, 0.5], &[0.1], &[0.5], 0.0, 1e-3, 1e-3).is_err());
    }

    #[test]
    fn interval_shapes() {
        let ci = confidence_interval(&[1.0f64, 2.0, 3.0], &[0.0, 4.0, -1.0], 100, 1.0, 0, 0.95).unwrap();
        assert_eq!(ci[0], Some((1.0, 1.0)));
        let (lo, hi) = ci[1].unwrap();
        assert!((hi - lo - 2.0 * 1.959963984540054 * 2.0 / 10.0).abs() < 1e-12);
        assert!(ci[2].is_none());

        let width = |n: usize| {
            let c = confidence_interval(&[0.5f64], &[0.3], n, 0.3, 2, 0.95).unwrap()[0].unwrap();
            c.1 - c.0
        };
        assert!((width(1000) / width(4000) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn bandwidth_rule() {
        let y = [-1.0, 1.0];
        let sd = sample_sd(&y);
        assert!((sd - 2f64.sqrt()).abs() < 1e-15);
        let h = default_bandwidth(&y, 2, 1.0).unwrap();
        assert!((h - 2f64.sqrt() * 2f64.powf(-1.0 / 9.0)).abs() < 1e-15);

        // n = 1000 with unit sd gives 1000^{-1/9}.
        let base: Vec<f64> = (0..1000).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let unit = 1.0 / sample_sd(&base);
        let scaled: Vec<f64> = base.iter().map(|v| v * unit).collect();
        let h = default_bandwidth(&scaled, 2, 1.0).unwrap();
        assert!((h - 0.4641588833612779).abs() < 1e-12, "{h}");
        let h0 = default_bandwidth(&scaled, 0, 1.0).unwrap();
        assert!((h0 - 1000f64.powf(-0.2)).abs() < 1e-12);

        let stretched: Vec<f64> = scaled.iter().map(|v| v * 3.0).collect();
        assert!((default_bandwidth(&stretched, 2, 1.0).unwrap() - 3.0 * h).abs() < 1e-12);

        assert!(matches!(default_bandwidth(&[2.0, 2.0], 2, 1.0), Err(Error::Degenerate(_))));
        assert!(default_bandwidth(&[2.0], 2, 1.0).is_err());
    }
}
