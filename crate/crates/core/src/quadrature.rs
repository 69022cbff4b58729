//! Globally adaptive Gauss–Kronrod (7, 15) quadrature.
//!
//! Panels are bisected in order of decreasing error estimate until the summed
//! estimate drops below `max(abs_tol, rel_tol * |I|)`. The integrand may be
//! real or complex; the error of a complex panel is the modulus of the
//! Kronrod–Gauss difference.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::ops::{Add, Mul, Sub};

use num_complex::Complex;
use num_traits::Zero;

use crate::scalar::Scalar;
use crate::{Error, Result};

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Values the integrator can accumulate.
pub(crate) trait QuadValue<T>:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<T, Output = Self> + Zero
{
    fn magnitude(self) -> T;
}

impl<T: Scalar> QuadValue<T> for T {
    fn magnitude(self) -> T {
        self.abs()
    }
}

impl<T: Scalar> QuadValue<T> for Complex<T> {
    fn magnitude(self) -> T {
        self.norm()
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct QuadSettings<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_panels: usize,
    /// Equal-width panels the interval is split into before adapting.
    pub initial_panels: usize,
}

impl<T: Scalar> Default for QuadSettings<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10).max(T::tolerance_floor()),
            rel_tol: T::tolerance_floor(),
            max_panels: 4000,
            initial_panels: 1,
        }
    }
}

impl<T: Scalar> QuadSettings<T> {
    pub fn with_initial_panels(mut self, panels: usize) -> Self {
        self.initial_panels = panels.max(1);
        self
    }

    pub fn with_max_panels(mut self, panels: usize) -> Self {
        self.max_panels = panels.max(1);
        self
    }

    pub fn with_abs_tol(mut self, tol: T) -> Self {
        self.abs_tol = tol.max(T::tolerance_floor());
        self
    }
}

struct Panel<T, V> {
    a: T,
    b: T,
    value: V,
    error: T,
}

impl<T: PartialOrd, V> PartialEq for Panel<T, V> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: PartialOrd, V> Eq for Panel<T, V> {}
impl<T: PartialOrd, V> PartialOrd for Panel<T, V> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: PartialOrd, V> Ord for Panel<T, V> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn gauss_kronrod<T, V, F>(f: &F, a: T, b: T) -> (V, T)
where
    T: Scalar,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    let half = T::lit(0.5);
    let center = (a + b) * half;
    let radius = (b - a) * half;
    let fc = f(center);
    let mut kronrod = fc * T::lit(WGK[7]);
    let mut gauss = fc * T::lit(WG[3]);
    for j in 0..7 {
        let dx = radius * T::lit(XGK[j]);
        let pair = f(center - dx) + f(center + dx);
        kronrod = kronrod + pair * T::lit(WGK[j]);
        if j % 2 == 1 {
            gauss = gauss + pair * T::lit(WG[j / 2]);
        }
    }
    let value = kronrod * radius;
    let error = ((kronrod - gauss) * radius).magnitude();
    (value, error)
}

/// Integrates `f` over `[a, b]`.
pub(crate) fn integrate<T, V, F>(f: F, a: T, b: T, settings: QuadSettings<T>) -> Result<V>
where
    T: Scalar,
    V: QuadValue<T>,
    F: Fn(T) -> V,
{
    if a == b {
        return Ok(V::zero());
    }
    let panels = settings.initial_panels.max(1);
    let width = (b - a) / T::usize(panels);
    let mut heap = BinaryHeap::with_capacity(panels * 2);
    let mut total = V::zero();
    let mut total_error = T::zero();
    for i in 0..panels {
        let lo = a + width * T::usize(i);
        let hi = if i + 1 == panels { b } else { lo + width };
        let (value, error) = gauss_kronrod(&f, lo, hi);
        total = total + value;
        total_error += error;
        heap.push(Panel { a: lo, b: hi, value, error });
    }

    let target = |total: V| settings.abs_tol.max(settings.rel_tol * total.magnitude());
    while total_error > target(total) {
        if heap.len() >= settings.max_panels {
            return Err(Error::QuadratureNotConverged {
                estimate: total.magnitude().to_f64_lossy(),
                residual: total_error.to_f64_lossy(),
            });
        }
        let worst = heap.pop().expect("at least one panel");
        let mid = (worst.a + worst.b) * T::lit(0.5);
        if mid <= worst.a || mid >= worst.b {
            // Panel cannot be split further at this precision.
            heap.push(worst);
            return Err(Error::QuadratureNotConverged {
                estimate: total.magnitude().to_f64_lossy(),
                residual: total_error.to_f64_lossy(),
            });
        }
        let (lv, le) = gauss_kronrod(&f, worst.a, mid);
        let (rv, re) = gauss_kronrod(&f, mid, worst.b);
        total = total - worst.value + lv + rv;
        total_error = total_error - worst.error + le + re;
        heap.push(Panel { a: worst.a, b: mid, value: lv, error: le });
        heap.push(Panel { a: mid, b: worst.b, value: rv, error: re });
    }

    // Re-sum from the panels so the result does not carry the drift of the
    // running updates.
    let mut panels: Vec<_> = heap.into_vec();
    panels.sort_by(|p, q| p.a.partial_cmp(&q.a).unwrap_or(Ordering::Equal));
    Ok(panels.iter().fold(V::zero(), |acc, p| acc + p.value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_interval_length() {
        let kronrod: f64 = 2.0 * WGK[..7].iter().sum::<f64>() + WGK[7];
        let gauss: f64 = 2.0 * WG[..3].iter().sum::<f64>() + WG[3];
        assert!((kronrod - 2.0).abs() < 1e-15);
        assert!((gauss - 2.0).abs() < 1e-15);
    }

    #[test]
    fn single_panel_is_exact_for_high_degree_polynomials() {
        // Kronrod 15 is exact through degree 22; Gauss 7 through degree 13.
        let f = |x: f64| x.powi(22) + 3.0 * x.powi(13) - x.powi(4);
        let (value, _) = gauss_kronrod(&f, -1.0, 1.0);
        let exact = 2.0 / 23.0 - 2.0 / 5.0;
        assert!((value - exact).abs() < 1e-14, "{value} vs {exact}");
        let g = |x: f64| x.powi(12);
        let (_, err) = gauss_kronrod(&g, -1.0, 1.0);
        assert!(err < 1e-15);
    }

    #[test]
    fn adaptive_handles_oscillation() {
        // ∫_0^50 cos(t) dt = sin(50)
        let v: f64 = integrate(|t: f64| t.cos(), 0.0, 50.0, QuadSettings::default()).unwrap();
        assert!((v - 50f64.sin()).abs() < 1e-10);
    }

    #[test]
    fn complex_integrand() {
        // ∫_0^1 e^{it} dt = (sin 1, 1 - cos 1)
        let v: Complex<f64> = integrate(
            |t: f64| Complex::new(t.cos(), t.sin()),
            0.0,
            1.0,
            QuadSettings::default(),
        )
        .unwrap();
        assert!((v.re - 1f64.sin()).abs() < 1e-13);
        assert!((v.im - (1.0 - 1f64.cos())).abs() < 1e-13);
    }

    #[test]
    fn endpoint_singularity_reports_non_convergence_with_tiny_budget() {
        let settings = QuadSettings { max_panels: 3, ..QuadSettings::default() };
        let r: Result<f64> = integrate(|t: f64| 1.0 / t.sqrt(), 0.0, 1.0, settings);
        assert!(matches!(r, Err(Error::QuadratureNotConverged { .. })));
    }

    #[test]
    fn f32_reaches_its_own_floor() {
        let v: f32 = integrate(|t: f32| t.sin(), 0.0, std::f32::consts::PI, QuadSettings::default())
            .unwrap();
        assert!((v - 2.0).abs() < 1e-5);
    }
}
