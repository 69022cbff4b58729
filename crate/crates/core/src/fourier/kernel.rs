use std::fmt;
use std::sync::Arc;

use crate::{Error, Result, Scalar};

type CfFn<T> = dyn Fn(T) -> T + Send + Sync;

/// A smoothing kernel specified through its Fourier transform `φ_k`, which is
/// real, even, equal to one at the origin and zero outside
/// `[-support_radius, support_radius]`.
#[derive(Clone)]
pub struct SmoothKernel<T> {
    cf: Arc<CfFn<T>>,
    support_radius: T,
    description: String,
}

impl<T: fmt::Debug> fmt::Debug for SmoothKernel<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothKernel")
            .field("description", &self.description)
            .field("support_radius", &self.support_radius)
            .finish()
    }
}

impl<T: Scalar> SmoothKernel<T> {
    /// The kernel with transform `(1 - t²)³` on `[-1, 1]`.
    pub fn fan() -> Self {
        Self {
            cf: Arc::new(|t: T| {
                let s = T::one() - t * t;
                s * s * s
            }),
            support_radius: T::one(),
            description: "fan (1-t^2)^3".to_string(),
        }
    }

    /// Wraps a user transform. The closure is only ever called inside the
    /// support; `cf(0) = 1` and evenness are checked at a few probe points.
    pub fn new<F>(description: impl Into<String>, support_radius: T, cf: F) -> Result<Self>
    where
        F: Fn(T) -> T + Send + Sync + 'static,
    {
        if !(support_radius > T::zero()) || !support_radius.is_finite() {
            return Err(Error::invalid("kernel support radius must be positive and finite"));
        }
        let tol = T::lit(1e-12).max(T::tolerance_floor());
        if (cf(T::zero()) - T::one()).abs() > tol {
            return Err(Error::invalid("kernel transform must equal 1 at the origin"));
        }
        for frac in [0.1, 0.37, 0.5, 0.81, 0.99] {
            let t = support_radius * T::lit(frac);
            let (a, b) = (cf(t), cf(-t));
            if !a.is_finite() || (a - b).abs() > tol {
                return Err(Error::invalid("kernel transform must be finite and even"));
            }
        }
        Ok(Self {
            cf: Arc::new(cf),
            support_radius,
            description: description.into(),
        })
    }

    /// `φ_k(t)`; exactly zero outside the support.
    #[inline]
    pub fn cf(&self, t: T) -> T {
        if t.abs() >= self.support_radius {
            T::zero()
        } else {
            (self.cf)(t)
        }
    }

    pub fn support_radius(&self) -> T {
        self.support_radius
    }

    pub fn description(&self) -> &str {
        &self.description
    }
}

impl<T: Scalar> Default for SmoothKernel<T> {
    fn default() -> Self {
        Self::fan()
    }
}

/// `φ_k(t)` for the given kernel.
pub fn char_fn_kernel<T: Scalar>(kernel: &SmoothKernel<T>, t: T) -> T {
    kernel.cf(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fan_values() {
        let k = SmoothKernel::<f64>::fan();
        assert_eq!(char_fn_kernel(&k, 0.0), 1.0);
        assert_eq!(char_fn_kernel(&k, 1.0), 0.0);
        assert_eq!(char_fn_kernel(&k, -1.0), 0.0);
        assert_eq!(char_fn_kernel(&k, 3.0), 0.0);
        assert!((char_fn_kernel(&k, 0.5) - 0.421875).abs() < 1e-15);
        assert_eq!(char_fn_kernel(&k, 0.3), char_fn_kernel(&k, -0.3));
    }

    #[test]
    fn rejects_unnormalized_or_odd_transforms() {
        assert!(SmoothKernel::<f64>::new("bad", 1.0, |t| 2.0 - t * t).is_err());
        assert!(SmoothKernel::<f64>::new("odd", 1.0, |t| 1.0 + t).is_err());
        assert!(SmoothKernel::<f64>::new("neg", -1.0, |_| 1.0).is_err());
        let tri = SmoothKernel::<f64>::new("triangle^2", 2.0, |t| {
            let s = 1.0 - t.abs() / 2.0;
            s * s
        })
        .unwrap();
        assert_eq!(tri.cf(2.5), 0.0);
        assert_eq!(tri.support_radius(), 2.0);
    }
}
