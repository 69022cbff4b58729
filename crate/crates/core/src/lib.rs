//! Deconvolution estimators of the density, distribution function and hazard
//! rate of a latent lifetime observed with additive ordinary-smooth noise.
//!
//! The observed data are `Y_i = X_i + e_i`, where the latent `X_i` form a
//! stationary, positively associated sequence and the errors `e_i` are i.i.d.
//! with a known characteristic function that decays polynomially. The crate
//! provides
//!
//! - [`fourier`]: characteristic functions, the deconvolving kernel `W_h`, its
//!   running integral `M_h`, the limit kernel `L` and the constants `D1`/`D2`;
//! - [`estimators`]: `f_n`, `F_n`, `λ_n`, the observed-data estimators
//!   `g_n`/`G_n`, the plug-in variance and confidence intervals;
//! - [`processes`]: seeded generators for the latent scenarios and Laplace
//!   contamination at a given noise-to-signal ratio;
//! - [`truth`]: analytic densities, distribution functions and hazards;
//! - [`simulation`]: the Monte Carlo experiment engine;
//! - [`cli`]: the `deconv-hazard` command-line front end.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix the scalar to `f64`, which is what the simulation
//! harness and the CLI use.

pub mod cli;
pub mod error;
pub mod estimators;
pub mod fourier;
pub mod processes;
mod quadrature;
mod scalar;
pub mod simulation;
pub mod truth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub use estimators::{
    confidence_interval, default_bandwidth, normal_quantile, plugin_variance, EstimatorConfig,
    HazardEstimate, HazardMode, KernelEval, PointFlag, Sample,
};
pub use fourier::{
    char_fn_error, char_fn_kernel, constant_d1, constant_d2, deconv_kernel_grid,
    deconv_kernel_point, limit_kernel, smoothness_params, ErrorFamily, ErrorModel, GridSpec,
    KernelGrid, SmoothKernel, TruncatedIntegral,
};
pub use truth::{classify_shape, HazardShape, TruthFunctions};

pub type SmoothKernel64 = SmoothKernel<f64>;
pub type ErrorModel64 = ErrorModel<f64>;
pub type KernelGrid64 = KernelGrid<f64>;
pub type GridSpec64 = GridSpec<f64>;
pub type Sample64 = Sample<f64>;
pub type EstimatorConfig64 = EstimatorConfig<f64>;
pub type HazardEstimate64 = HazardEstimate<f64>;
pub type TruthFunctions64 = TruthFunctions<f64>;

pub type SmoothKernel32 = SmoothKernel<f32>;
pub type ErrorModel32 = ErrorModel<f32>;
pub type KernelGrid32 = KernelGrid<f32>;
pub type Sample32 = Sample<f32>;
pub type HazardEstimate32 = HazardEstimate<f32>;
