use num_complex::Complex;

use super::{deconv_ratio, imaginary_guard, ErrorModel, SmoothKernel};
use crate::quadrature::{integrate, QuadSettings};
use crate::{Error, Result, Scalar};

/// Equal panels for an integrand oscillating like `cos(t x)` on `[0, R]`.
pub(crate) fn oscillation_panels<T: Scalar>(radius: T, x: T) -> usize {
    let cycles = (radius * x.abs() / T::PI()).ceil().to_usize().unwrap_or(1);
    (cycles + 1).min(4096)
}

fn check_bandwidth<T: Scalar>(h: T) -> Result<()> {
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    Ok(())
}

fn real_part_checked<T: Scalar>(value: Complex<T>) -> Result<T> {
    let guard = imaginary_guard(value.re.abs());
    if value.im.abs() > guard {
        return Err(Error::ImaginaryResidual {
            imaginary: value.im.to_f64_lossy(),
            guard: guard.to_f64_lossy(),
        });
    }
    Ok(value.re)
}

/// `W_h(x)` by adaptive quadrature over the kernel support.
///
/// The integral over `[-R, R]` is folded onto `[0, R]` by pairing `t` with
/// `-t`; the imaginary part of the folded integral is computed, not assumed,
/// and must stay below the guard.
pub fn deconv_kernel_point<T: Scalar>(
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    h: T,
    x: T,
) -> Result<T> {
    check_bandwidth(h)?;
    let radius = kernel.support_radius();
    let integrand = |t: T| {
        let phase = Complex::new((t * x).cos(), -(t * x).sin());
        phase * deconv_ratio(kernel, model, h, t) + phase.conj() * deconv_ratio(kernel, model, h, -t)
    };
    let settings = QuadSettings::default().with_initial_panels(oscillation_panels(radius, x));
    let total: Complex<T> = integrate(integrand, T::zero(), radius, settings)?;
    real_part_checked(total / (T::TAU()))
}

/// `M_h(x) = ∫_{-∞}^x W_h` by quadrature of its Fourier representation
/// `1/2 + (1/2π) p.v.∫ e^{-itx} ρ(t) / (-it) dt`.
pub fn deconv_cdf_point<T: Scalar>(
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    h: T,
    x: T,
) -> Result<T> {
    check_bandwidth(h)?;
    let radius = kernel.support_radius();
    let i = Complex::new(T::zero(), T::one());
    let integrand = |t: T| {
        let phase = Complex::new((t * x).cos(), -(t * x).sin());
        let diff = phase * deconv_ratio(kernel, model, h, t)
            - phase.conj() * deconv_ratio(kernel, model, h, -t);
        i * diff / t
    };
    let settings = QuadSettings::default().with_initial_panels(oscillation_panels(radius, x));
    let total: Complex<T> = integrate(integrand, T::zero(), radius, settings)?;
    let half = T::lit(0.5);
    Ok(half + real_part_checked(total / T::TAU())?)
}

/// The plain kernel `k(x)`, the inverse transform of `φ_k`.
pub fn plain_kernel_point<T: Scalar>(kernel: &SmoothKernel<T>, x: T) -> Result<T> {
    deconv_kernel_point(kernel, &ErrorModel::none(), T::one(), x)
}
