use std::cell::RefCell;

use super::inversion::oscillation_panels;
use super::{ErrorModel, SmoothKernel};
use crate::quadrature::{integrate, QuadSettings};
use crate::{Error, Result, Scalar};

/// Default truncation of the `D1` integral.
pub const D1_TRUNCATION: f64 = 200.0;

/// A truncated integral with the change observed when the truncation is
/// doubled, used as the remainder estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedIntegral<T> {
    pub value: T,
    pub remainder: T,
    pub truncation: T,
}

fn tail_integrand<T: Scalar>(kernel: &SmoothKernel<T>, beta: u32) -> impl Fn(T) -> T + '_ {
    move |t: T| t.powi(beta as i32) * kernel.cf(t)
}

/// `L(u) = (1/πβ₁) ∫_0^∞ cos(tu) t^β φ_k(t) dt`, the limit of `h^β W_h(u)`
/// as `h → 0`.
pub fn limit_kernel<T: Scalar>(kernel: &SmoothKernel<T>, model: &ErrorModel<T>, u: T) -> Result<T> {
    let radius = kernel.support_radius();
    let weight = tail_integrand(kernel, model.beta());
    let settings = QuadSettings::default().with_initial_panels(oscillation_panels(radius, u));
    let value: T = integrate(|t: T| (t * u).cos() * weight(t), T::zero(), radius, settings)?;
    Ok(value / (T::PI() * model.beta1()))
}

/// `D2 = (1/2πβ₁²) ∫ t^{2β} φ_k(t)² dt`.
pub fn constant_d2<T: Scalar>(kernel: &SmoothKernel<T>, model: &ErrorModel<T>) -> Result<T> {
    let radius = kernel.support_radius();
    let weight = tail_integrand(kernel, model.beta());
    let half: T = integrate(
        |t: T| {
            let w = weight(t);
            w * w
        },
        T::zero(),
        radius,
        QuadSettings::default(),
    )?;
    let beta1 = model.beta1();
    Ok(half * T::lit(2.0) / (T::TAU() * beta1 * beta1))
}

/// `∫_{-U}^{U} L(u) du` by quadrature of `L`, which is itself evaluated by
/// quadrature. `L` decays like `u^{-β-1}` times an oscillation, so the
/// integral is repeated at `2U` and the difference reported as the
/// remainder; a difference above `1e-4` is an error carrying both values.
pub fn constant_d1<T: Scalar>(
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    u_truncation: T,
) -> Result<TruncatedIntegral<T>> {
    if !(u_truncation > T::zero()) || !u_truncation.is_finite() {
        return Err(Error::invalid("D1 truncation must be positive"));
    }
    let first = half_line_integral(kernel, model, T::zero(), u_truncation)?;
    let extra = half_line_integral(kernel, model, u_truncation, u_truncation * T::lit(2.0))?;
    let two = T::lit(2.0);
    let value = first * two;
    let remainder = (extra * two).abs();
    if remainder > T::lit(1e-4) {
        return Err(Error::TruncationUnstable {
            partial: value.to_f64_lossy(),
            residual: remainder.to_f64_lossy(),
        });
    }
    Ok(TruncatedIntegral { value, remainder, truncation: u_truncation })
}

/// `∫_a^b L(u) du` for `0 ≤ a < b`, panel by panel at the period of the
/// fastest oscillation of `L`.
fn half_line_integral<T: Scalar>(
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    a: T,
    b: T,
) -> Result<T> {
    let radius = kernel.support_radius();
    let period = T::TAU() / radius;
    let panels = ((b - a) / period).ceil().to_usize().unwrap_or(1).max(1);
    let settings = QuadSettings::default()
        .with_initial_panels(panels)
        .with_abs_tol(T::lit(1e-9))
        .with_max_panels(panels * 8 + 64);
    // The integrand cannot return errors; the first inner failure is kept
    // and takes precedence over the outer result.
    let failure = RefCell::new(None);
    let value = integrate(
        |u: T| match limit_kernel(kernel, model, u) {
            Ok(v) => v,
            Err(e) => {
                failure.borrow_mut().get_or_insert(e);
                T::zero()
            }
        },
        a,
        b,
        settings,
    );
    match failure.into_inner() {
        Some(e) => Err(e),
        None => value,
    }
}
