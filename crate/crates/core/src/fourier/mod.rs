//! Characteristic-function machinery and Fourier inversion.
//!
//! The deconvolving kernel is the inverse transform of the ratio of the
//! kernel characteristic function to the error characteristic function,
//!
//! ```text
//! W_h(x) = (1/2π) ∫ e^{-itx} φ_k(t) / φ_r(t/h) dt,      M_h(x) = ∫_{-∞}^x W_h,
//! ```
//!
//! with `φ_r(t) = E[e^{ite}]`. Because `φ_k` has compact support the integral
//! runs over `[-R, R]` only. Pointwise values come from adaptive quadrature;
//! [`deconv_kernel_grid`] tabulates `W_h` on a uniform grid with one FFT.

mod constants;
mod error_model;
mod grid;
mod inversion;
mod kernel;

pub use constants::{constant_d1, constant_d2, limit_kernel, TruncatedIntegral, D1_TRUNCATION};
pub use error_model::{char_fn_error, smoothness_params, ErrorFamily, ErrorModel};
pub use grid::{deconv_kernel_grid, GridSpec, KernelGrid};
pub use inversion::{deconv_cdf_point, deconv_kernel_point, plain_kernel_point};
pub use kernel::{char_fn_kernel, SmoothKernel};

use num_complex::Complex;

use crate::Scalar;

/// `φ_k(t) / φ_r(t/h)`, the transform of the deconvolving kernel.
pub(crate) fn deconv_ratio<T: Scalar>(
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    h: T,
    t: T,
) -> Complex<T> {
    let k = kernel.cf(t);
    if k == T::zero() {
        return Complex::new(T::zero(), T::zero());
    }
    model.inverse_cf(t / h) * k
}

/// Guard on the imaginary residue of a real inversion, scaled to the size of
/// the result.
pub(crate) fn imaginary_guard<T: Scalar>(scale: T) -> T {
    let floor = T::lit(1e-9);
    let precision = T::epsilon() * T::lit(1e4);
    floor.max(precision) * scale.max(T::one())
}
