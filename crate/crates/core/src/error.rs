use thiserror::Error;

/// Errors raised by the estimators, generators and experiment engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter or configuration value is outside its domain.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Invalid sample data.
    #[error("invalid sample: {0}")]
    InvalidSample(String),

    /// Adaptive quadrature stopped before reaching its tolerance.
    #[error("quadrature did not converge: estimate {estimate}, residual {residual:e}")]
    QuadratureNotConverged { estimate: f64, residual: f64 },

    /// A truncated oscillatory integral failed its stability check.
    #[error("truncated integral unstable: partial value {partial}, change on doubling {residual:e}")]
    TruncationUnstable { partial: f64, residual: f64 },

    /// A Fourier inversion left an imaginary residue larger than the guard,
    /// which points to a characteristic function without the required parity.
    #[error("imaginary part {imaginary:e} of a real inversion exceeds guard {guard:e}")]
    ImaginaryResidual { imaginary: f64, guard: f64 },

    /// The kernel grid does not cover the kernel mass: `W_h` is still
    /// significant at the grid edges.
    #[error("kernel grid too narrow: relative edge magnitude {edge:e} exceeds {tolerance:e}")]
    GridTooNarrow { edge: f64, tolerance: f64 },

    /// Asymptotic-mode hazard requested where `1 - F_n` is below the guard.
    /// `lambda` carries the partial result (NaN at offending points).
    #[error("hazard denominator below guard at {} grid point(s)", points.len())]
    DenominatorBelowGuard { points: Vec<f64>, lambda: Vec<f64> },

    /// The scenario has no closed-form marginal hazard.
    #[error("scenario {0} has no analytic truth")]
    NoAnalyticTruth(String),

    /// Length mismatch between arrays that must align.
    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    /// A Monte Carlo cell had more failed replications than its budget.
    #[error("simulation cell failed: {0}")]
    CellFailed(String),

    /// Reading or writing a file failed.
    #[error("i/o error: {0}")]
    Io(String),

    /// Non-finite or degenerate values where a statistic needs spread.
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    /// True for failures of the numerical machinery rather than bad input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::QuadratureNotConverged { .. }
                | Error::TruncationUnstable { .. }
                | Error::ImaginaryResidual { .. }
                | Error::DenominatorBelowGuard { .. }
                | Error::Degenerate(_)
        )
    }
}
