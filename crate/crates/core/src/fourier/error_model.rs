use num_complex::Complex;

use crate::{Error, Result, Scalar};

/// Distribution family of the additive measurement error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ErrorFamily<T> {
    /// No contamination; `φ_r ≡ 1`.
    None,
    /// Laplace(0, b) with density `exp(-|x|/b) / 2b` and `φ_r(t) = 1/(1 + b²t²)`.
    Laplace { scale: T },
    /// Gamma with integer shape `a` and rate `λ`: `φ_r(t) = (1 - it/λ)^{-a}`.
    Gamma { shape: u32, rate: T },
}

/// An ordinary-smooth error law: `|φ_r| > 0` everywhere and
/// `t^β φ_r(t) → β₁` as `t → ∞`, with `β` even.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorModel<T> {
    family: ErrorFamily<T>,
    beta: u32,
    beta1: T,
}

impl<T: Scalar> ErrorModel<T> {
    /// The error-free model, `β = 0` and `β₁ = 1`.
    pub fn none() -> Self {
        Self { family: ErrorFamily::None, beta: 0, beta1: T::one() }
    }

    pub fn laplace(scale: T) -> Result<Self> {
        if !(scale > T::zero()) || !scale.is_finite() {
            return Err(Error::invalid(format!("Laplace scale must be positive, got {scale}")));
        }
        Ok(Self {
            family: ErrorFamily::Laplace { scale },
            beta: 2,
            beta1: T::one() / (scale * scale),
        })
    }

    /// Gamma error with the given shape and rate. The smoothness order equals
    /// the shape, so only even integer shapes are accepted. `β₁` is read off
    /// the tail of the characteristic function; it equals `(iλ)^a`, which is
    /// negative when `a ≡ 2 (mod 4)`.
    pub fn gamma(shape: T, rate: T) -> Result<Self> {
        if !(rate > T::zero()) || !rate.is_finite() {
            return Err(Error::invalid(format!("Gamma rate must be positive, got {rate}")));
        }
        let rounded = shape.round();
        if !(shape > T::zero()) || (shape - rounded).abs() > T::tolerance_floor() {
            return Err(Error::invalid(format!(
                "Gamma shape must be a positive even integer, got {shape}"
            )));
        }
        let a = rounded
            .to_u32()
            .ok_or_else(|| Error::invalid("Gamma shape out of range"))?;
        if a % 2 != 0 {
            return Err(Error::invalid(format!(
                "Gamma shape {a} gives an odd smoothness order; an even order is required"
            )));
        }
        let family = ErrorFamily::Gamma { shape: a, rate };
        let beta1 = tail_constant(a, rate)?;
        Ok(Self { family, beta: a, beta1 })
    }

    pub fn family(&self) -> ErrorFamily<T> {
        self.family
    }

    /// Smoothness order `β`.
    pub fn beta(&self) -> u32 {
        self.beta
    }

    /// Tail constant `β₁`.
    pub fn beta1(&self) -> T {
        self.beta1
    }

    pub fn is_none(&self) -> bool {
        matches!(self.family, ErrorFamily::None)
    }

    /// Standard deviation of the error.
    pub fn std_dev(&self) -> T {
        match self.family {
            ErrorFamily::None => T::zero(),
            ErrorFamily::Laplace { scale } => scale * T::SQRT_2(),
            ErrorFamily::Gamma { shape, rate } => T::usize(shape as usize).sqrt() / rate,
        }
    }

    /// `φ_r(t) = E[e^{ite}]`.
    pub fn cf(&self, t: T) -> Complex<T> {
        match self.family {
            ErrorFamily::None => Complex::new(T::one(), T::zero()),
            ErrorFamily::Laplace { scale } => {
                let bt = scale * t;
                Complex::new(T::one() / (T::one() + bt * bt), T::zero())
            }
            ErrorFamily::Gamma { shape, rate } => {
                Complex::new(T::one(), -t / rate).powi(shape as i32).inv()
            }
        }
    }

    /// `1 / φ_r(t)`, evaluated directly.
    #[inline]
    pub fn inverse_cf(&self, t: T) -> Complex<T> {
        match self.family {
            ErrorFamily::None => Complex::new(T::one(), T::zero()),
            ErrorFamily::Laplace { scale } => {
                let bt = scale * t;
                Complex::new(T::one() + bt * bt, T::zero())
            }
            ErrorFamily::Gamma { shape, rate } => {
                Complex::new(T::one(), -t / rate).powi(shape as i32)
            }
        }
    }
}

/// Richardson-extrapolated limit of `t^a φ_r(t)`; the leading correction is
/// `O(1/t)`.
fn tail_constant<T: Scalar>(a: u32, rate: T) -> Result<T> {
    let probe = |t: T| -> Complex<T> {
        // t^a (1 - it/λ)^{-a} = (t / (1 - it/λ))^a keeps the magnitudes O(λ).
        let z = Complex::new(t, T::zero()) / Complex::new(T::one(), -t / rate);
        z.powi(a as i32)
    };
    let t = rate * T::lit(1e5);
    let limit = probe(t * T::lit(2.0)) * T::lit(2.0) - probe(t);
    let scale = limit.norm();
    if !(scale > T::zero()) || limit.im.abs() > scale * T::lit(1e-4) {
        return Err(Error::invalid("error characteristic function has no real tail limit"));
    }
    Ok(limit.re)
}

/// `φ_r(t)` for the given error model.
pub fn char_fn_error<T: Scalar>(model: &ErrorModel<T>, t: T) -> Complex<T> {
    model.cf(t)
}

/// The `(β, β₁)` pair of an ordinary-smooth error model.
pub fn smoothness_params<T: Scalar>(model: &ErrorModel<T>) -> (u32, T) {
    (model.beta(), model.beta1())
}
