//! Closed-form marginal density, distribution function and hazard for the
//! i.i.d. Weibull and log-normal scenarios.
//!
//! The normal tail `1 - Φ(z)` is evaluated as `erfc(z/√2)/2` (libm), which
//! keeps full relative precision in the upper tail where `1 - Φ` would
//! cancel.

use libm::erfc;

use crate::processes::{log_variance, ScenarioKind, ScenarioSpec};
use crate::{Error, Result, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HazardShape {
    /// Increasing.
    Ihr,
    /// Decreasing.
    Dhr,
    /// Constant.
    Chr,
    /// Non-monotone.
    Nmhr,
}

impl HazardShape {
    pub fn as_str(self) -> &'static str {
        match self {
            HazardShape::Ihr => "IHR",
            HazardShape::Dhr => "DHR",
            HazardShape::Chr => "CHR",
            HazardShape::Nmhr => "NMHR",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Law<T> {
    Weibull { shape: T, scale: T },
    LogNormal { sigma: T },
}

/// Analytic density, distribution function and hazard of a lifetime law
/// supported on `[support_left, ∞)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthFunctions<T> {
    law: Law<T>,
    shape: HazardShape,
    support_left: T,
}

impl<T: Scalar> TruthFunctions<T> {
    pub fn weibull(shape: T, scale: T) -> Result<Self> {
        if !(shape > T::zero()) || !(scale > T::zero()) {
            return Err(Error::invalid("Weibull shape and scale must be positive"));
        }
        let kind = if shape > T::one() {
            HazardShape::Ihr
        } else if shape < T::one() {
            HazardShape::Dhr
        } else {
            HazardShape::Chr
        };
        Ok(Self { law: Law::Weibull { shape, scale }, shape: kind, support_left: T::zero() })
    }

    /// `ln X ~ N(0, σ²)`.
    pub fn lognormal(sigma: T) -> Result<Self> {
        if !(sigma > T::zero()) {
            return Err(Error::invalid("log-normal σ must be positive"));
        }
        Ok(Self { law: Law::LogNormal { sigma }, shape: HazardShape::Nmhr, support_left: T::zero() })
    }

    pub fn shape(&self) -> HazardShape {
        self.shape
    }

    pub fn support_left(&self) -> T {
        self.support_left
    }

    pub fn density(&self, x: T) -> T {
        if x <= self.support_left {
            return T::zero();
        }
        match self.law {
            Law::Weibull { shape, scale } => {
                let r = x / scale;
                shape / scale * r.powf(shape - T::one()) * (-r.powf(shape)).exp()
            }
            Law::LogNormal { sigma } => {
                let z = x.ln() / sigma;
                let norm = (T::TAU()).sqrt() * sigma * x;
                (-(z * z) * T::lit(0.5)).exp() / norm
            }
        }
    }

    pub fn cdf(&self, x: T) -> T {
        T::one() - self.survival(x)
    }

    /// `1 - F(x)`, computed directly.
    pub fn survival(&self, x: T) -> T {
        if x <= self.support_left {
            return T::one();
        }
        match self.law {
            Law::Weibull { shape, scale } => (-(x / scale).powf(shape)).exp(),
            Law::LogNormal { sigma } => {
                let z = (x.ln() / sigma).to_f64_lossy();
                T::lit(0.5 * erfc(z / std::f64::consts::SQRT_2))
            }
        }
    }

    /// `f(x) / (1 - F(x))`. At the left edge of the support the limit from
    /// the right is returned (infinite for a Weibull shape below one).
    pub fn hazard(&self, x: T) -> T {
        match self.law {
            Law::Weibull { shape, scale } => {
                if x < self.support_left {
                    return T::zero();
                }
                shape / scale * (x / scale).powf(shape - T::one())
            }
            Law::LogNormal { .. } => {
                if x <= self.support_left {
                    return T::zero();
                }
                self.density(x) / self.survival(x)
            }
        }
    }
}

/// The analytic truth of a scenario. Dependent Gaussian scenarios have no
/// lifetime interpretation here and return [`Error::NoAnalyticTruth`].
pub fn truth_for(spec: &ScenarioSpec) -> Result<TruthFunctions<f64>> {
    match spec.kind() {
        ScenarioKind::WeibullIid { shape, scale } => TruthFunctions::weibull(shape, scale),
        ScenarioKind::LogNormalMa { normalization } => {
            TruthFunctions::lognormal(log_variance(normalization).sqrt())
        }
        ScenarioKind::Ar1 { .. } | ScenarioKind::TruncatedMaInf { .. } => {
            Err(Error::NoAnalyticTruth(spec.canonical()))
        }
    }
}

/// Shape of a hazard from its values on an increasing probe grid. Steps
/// within `1e-9` (relative to the values) count as flat.
pub fn classify_shape<T: Scalar, F: Fn(T) -> T>(hazard: F, probe: &[T]) -> Result<HazardShape> {
    let values: Vec<T> = probe.iter().map(|&x| hazard(x)).collect();
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::Degenerate(format!("hazard is not finite at probe point {i}")));
    }
    if values.len() < 2 {
        return Err(Error::invalid("shape classification needs at least 2 probe points"));
    }
    let tol = T::lit(1e-9);
    let mut up = false;
    let mut down = false;
    for w in values.windows(2) {
        let step = w[1] - w[0];
        let slack = tol * w[0].abs().max(w[1].abs()).max(T::one());
        up |= step > slack;
        down |= step < -slack;
    }
    Ok(match (up, down) {
        (false, false) => HazardShape::Chr,
        (true, false) => HazardShape::Ihr,
        (false, true) => HazardShape::Dhr,
        (true, true) => HazardShape::Nmhr,
    })
}
