use num_complex::Complex64;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("transfer function not finite at harmonic k = {k} (s = {s})")]
    Singularity { k: i32, s: Complex64 },

    #[error("matrix is numerically singular (pivot ratio {ratio:.3e}){}", fmt_freq(*.freq_hz))]
    SingularMatrix { ratio: f64, freq_hz: Option<f64> },

    #[error("invalid operating point: {0}")]
    InvalidOperatingPoint(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("sequence shift {shift} outside harmonic order {order}")]
    ShiftOutOfRange { shift: i32, order: usize },

    #[error("simulation diverged at t = {t:.6} s")]
    Divergence { t: f64 },

    #[error("periodic steady state not reached after {periods} periods (last residual {:.3e} p.u.)", .trace.last().copied().unwrap_or(f64::NAN))]
    SteadyState { periods: usize, trace: Vec<f64> },

    #[error("ill-conditioned scan solve at {freq_hz} Hz (condition {cond:.3e})")]
    IllConditioned { freq_hz: f64, cond: f64 },

    #[error("format error: {0}")]
    Format(String),
}

fn fmt_freq(f: Option<f64>) -> String {
    match f {
        Some(f) => format!(" at {f} Hz"),
        None => String::new(),
    }
}

impl Error {
    /// Attach a frequency to singular-matrix errors raised deep inside a solve.
    pub fn at_frequency(self, hz: f64) -> Self {
        match self {
            Error::SingularMatrix { ratio, .. } => Error::SingularMatrix {
                ratio,
                freq_hz: Some(hz),
            },
            other => other,
        }
    }

    /// Errors that a sweep records as a flagged point instead of aborting.
    pub fn is_point_singularity(&self) -> bool {
        matches!(
            self,
            Error::Singularity { .. } | Error::SingularMatrix { .. } | Error::IllConditioned { .. }
        )
    }
}
