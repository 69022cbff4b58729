use num_complex::Complex;
use rustfft::FftPlanner;

use super::{deconv_ratio, imaginary_guard, ErrorModel, SmoothKernel};
use crate::{Error, Result, Scalar};

/// Layout of a tabulated kernel: `points` uniform nodes on
/// `[-half_width, half_width]` (in the scaled variable `u = (x - y)/h`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec<T> {
    pub half_width: T,
    pub points: usize,
    /// Upper bound on the frequency step of the discretized inversion
    /// integral; the FFT length is chosen to honour it.
    pub freq_step: T,
    /// Largest `|W_h|` allowed over the outer 1% of the grid, relative to
    /// `max |W_h|`.
    pub edge_tolerance: T,
}

impl<T: Scalar> Default for GridSpec<T> {
    fn default() -> Self {
        Self {
            half_width: T::lit(40.0),
            points: 4097,
            freq_step: T::lit(2e-3),
            edge_tolerance: T::lit(1e-3),
        }
    }
}

impl<T: Scalar> GridSpec<T> {
    pub fn new(half_width: T, points: usize) -> Self {
        Self { half_width, points, ..Self::default() }
    }

    pub fn spacing(&self) -> T {
        self.half_width * T::lit(2.0) / T::usize(self.points - 1)
    }

    fn validate(&self) -> Result<()> {
        if self.points < 3 {
            return Err(Error::invalid("kernel grid needs at least 3 points"));
        }
        if !(self.half_width > T::zero()) || !self.half_width.is_finite() {
            return Err(Error::invalid("kernel grid half-width must be positive"));
        }
        if !(self.freq_step > T::zero()) || !(self.edge_tolerance > T::zero()) {
            return Err(Error::invalid("kernel grid tolerances must be positive"));
        }
        Ok(())
    }
}

/// `W_h` and its running integral `M_h` tabulated on a uniform grid.
#[derive(Debug, Clone)]
pub struct KernelGrid<T> {
    points: Vec<T>,
    spacing: T,
    w_values: Vec<T>,
    m_values: Vec<T>,
    bandwidth: T,
    origin: T,
    inv_spacing: T,
}

impl<T: Scalar> KernelGrid<T> {
    pub fn points(&self) -> &[T] {
        &self.points
    }

    pub fn spacing(&self) -> T {
        self.spacing
    }

    pub fn w_values(&self) -> &[T] {
        &self.w_values
    }

    pub fn m_values(&self) -> &[T] {
        &self.m_values
    }

    pub fn bandwidth(&self) -> T {
        self.bandwidth
    }

    /// Trapezoid mass of `W_h` over the grid, i.e. the last entry of `M_h`.
    pub fn mass(&self) -> T {
        *self.m_values.last().expect("non-empty grid")
    }

    /// Node index and fractional offset of `u`, or `None` outside the grid.
    #[inline]
    pub(crate) fn locate(&self, u: T) -> Locus<T> {
        let s = (u - self.origin) * self.inv_spacing;
        if !(s >= T::zero()) {
            return Locus::Left;
        }
        let j = match s.to_usize() {
            Some(j) => j,
            None => return Locus::Right,
        };
        if j + 1 >= self.points.len() {
            return Locus::Right;
        }
        Locus::Inside(j, s - T::usize(j))
    }

    #[inline]
    pub(crate) fn w_located(&self, locus: Locus<T>) -> T {
        match locus {
            Locus::Inside(j, frac) => {
                self.w_values[j] + (self.w_values[j + 1] - self.w_values[j]) * frac
            }
            _ => T::zero(),
        }
    }

    #[inline]
    pub(crate) fn m_located(&self, locus: Locus<T>) -> T {
        match locus {
            Locus::Inside(j, frac) => {
                self.m_values[j] + (self.m_values[j + 1] - self.m_values[j]) * frac
            }
            Locus::Left => T::zero(),
            Locus::Right => self.mass(),
        }
    }

    /// `W_h(u)` by linear interpolation; zero outside the grid.
    pub fn w_at(&self, u: T) -> T {
        self.w_located(self.locate(u))
    }

    /// `M_h(u)` by linear interpolation; 0 left of the grid and the grid
    /// mass right of it.
    pub fn m_at(&self, u: T) -> T {
        self.m_located(self.locate(u))
    }

    pub(crate) fn same_layout(&self, other: &KernelGrid<T>) -> bool {
        self.points.len() == other.points.len()
            && self.origin == other.origin
            && self.spacing == other.spacing
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) enum Locus<T> {
    Left,
    Inside(usize, T),
    Right,
}

/// Tabulates `W_h` on the nodes of `spec` with a single FFT and accumulates
/// `M_h` by the trapezoid rule from the left edge.
///
/// The inversion integral is discretized at frequencies `t_m = m Δt` with
/// `Δt Δx = 2π / N'`, so that `Σ_m ρ(t_m) e^{-i t_m x_j} Δt` over all nodes
/// `x_j` is one length-`N'` DFT. `N'` is the smallest power of two with
/// `Δt ≤ freq_step` and `N' ≥ points`.
pub fn deconv_kernel_grid<T: Scalar>(
    kernel: &SmoothKernel<T>,
    model: &ErrorModel<T>,
    h: T,
    spec: GridSpec<T>,
) -> Result<KernelGrid<T>> {
    spec.validate()?;
    if !(h > T::zero()) || !h.is_finite() {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    let n = spec.points;
    let dx = spec.spacing();
    let x_min = -spec.half_width;
    let radius = kernel.support_radius();
    if !(dx * radius < T::PI()) {
        return Err(Error::invalid(
            "kernel grid spacing too coarse for the kernel support (aliasing)",
        ));
    }

    let wanted = (T::TAU() / (dx * spec.freq_step)).ceil().to_usize().unwrap_or(usize::MAX);
    let fft_len = wanted.max(n).checked_next_power_of_two().ok_or_else(|| {
        Error::invalid("kernel grid frequency step requires an FFT that is too long")
    })?;
    let dt = T::TAU() / (T::usize(fft_len) * dx);
    let last = (radius / dt).floor().to_usize().unwrap_or(0);
    let edge_weight = if (T::usize(last) * dt - radius).abs() <= dt * T::lit(1e-9) {
        T::lit(0.5)
    } else {
        T::one()
    };

    let mut buffer = vec![Complex::new(T::zero(), T::zero()); fft_len];
    for m in 0..=last {
        let weight = if m == last { edge_weight } else { T::one() } * dt;
        let t = T::usize(m) * dt;
        let shift = t * x_min;
        // e^{-i t x_min} and its conjugate for -t.
        let phase = Complex::new(shift.cos(), -shift.sin());
        buffer[m] = deconv_ratio(kernel, model, h, t) * phase * weight;
        if m > 0 {
            buffer[fft_len - m] = deconv_ratio(kernel, model, h, -t) * phase.conj() * weight;
        }
    }
    FftPlanner::new().plan_fft_forward(fft_len).process(&mut buffer);

    let scale = T::one() / T::TAU();
    let mut w_values = Vec::with_capacity(n);
    let mut worst_imag = T::zero();
    let mut peak = T::zero();
    for value in buffer.iter().take(n) {
        let w = value.re * scale;
        worst_imag = worst_imag.max((value.im * scale).abs());
        peak = peak.max(w.abs());
        w_values.push(w);
    }
    let guard = imaginary_guard(peak);
    if worst_imag > guard {
        return Err(Error::ImaginaryResidual {
            imaginary: worst_imag.to_f64_lossy(),
            guard: guard.to_f64_lossy(),
        });
    }

    let rim = (n / 100).max(1);
    let edge = w_values[..rim]
        .iter()
        .chain(&w_values[n - rim..])
        .fold(T::zero(), |acc, w| acc.max(w.abs()));
    if edge > spec.edge_tolerance * peak {
        return Err(Error::GridTooNarrow {
            edge: (edge / peak).to_f64_lossy(),
            tolerance: spec.edge_tolerance.to_f64_lossy(),
        });
    }

    let half_dx = dx * T::lit(0.5);
    let mut m_values = Vec::with_capacity(n);
    let mut running = T::zero();
    m_values.push(running);
    for pair in w_values.windows(2) {
        running += (pair[0] + pair[1]) * half_dx;
        m_values.push(running);
    }

    let points = (0..n).map(|j| x_min + T::usize(j) * dx).collect();
    Ok(KernelGrid {
        points,
        spacing: dx,
        w_values,
        m_values,
        bandwidth: h,
        origin: x_min,
        inv_spacing: T::one() / dx,
    })
}
