//! Error type shared by every pipeline stage.

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function being evaluated.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid {what}: {reason}")]
    InvalidParameter { what: String, reason: String },

    /// No sign change of the dispersion residual in the guided band.
    #[error("no guided mode m={m} at k={k} rad/m (no sign change of the dispersion residual in the guided band)")]
    NoGuidedMode { m: u32, k: f64 },

    #[error("k-grid cannot resolve the phase at z={z} m, t={t} s: needs about {needed:.0} nodes per panel, has {actual:.0}")]
    PhaseResolution { z: f64, t: f64, needed: f64, actual: f64 },

    #[error("time window truncates moment n={n}: tail fraction {tail:.3e} exceeds bound {bound:.3e}")]
    TailTruncation { n: usize, tail: f64, bound: f64 },

    #[error("negative variance: radicand {radicand:.6e} below tolerance -{tolerance:.3e}")]
    NegativeVariance { radicand: f64, tolerance: f64 },

    #[error("integrand not integrable near k=0: local power-law exponent {exponent:.3} (needs > -1) for {what}")]
    Integrability { what: String, exponent: f64 },

    #[error("cross-check mismatch for {what}: {first:.12e} vs {second:.12e} (relative {relative:.3e} > {tolerance:.1e})")]
    CrossCheckMismatch { what: String, first: f64, second: f64, relative: f64, tolerance: f64 },

    #[error("quadrature did not converge for {what}: achieved relative error {achieved:.3e}, target {target:.1e}")]
    Quadrature { what: String, achieved: f64, target: f64 },

    #[error("calibration points are not asymptotic: sigma/z changes by {change:.3e} between the last two points (limit {limit:.1e})")]
    NotAsymptotic { change: f64, limit: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable name of the variant, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Domain(_) => "domain",
            Self::InvalidParameter { .. } => "invalid_parameter",
            Self::NoGuidedMode { .. } => "no_guided_mode",
            Self::PhaseResolution { .. } => "phase_resolution",
            Self::TailTruncation { .. } => "tail_truncation",
            Self::NegativeVariance { .. } => "negative_variance",
            Self::Integrability { .. } => "integrability",
            Self::CrossCheckMismatch { .. } => "cross_check_mismatch",
            Self::Quadrature { .. } => "quadrature",
            Self::NotAsymptotic { .. } => "not_asymptotic",
            Self::InsufficientData(_) => "insufficient_data",
            Self::Config(_) => "config",
            Self::Io(_) => "io",
            Self::Json(_) => "json",
        }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Self::Domain(msg.into())
    }

    pub(crate) fn invalid(what: impl Into<String>, reason: impl Into<String>) -> Self {
        Self::InvalidParameter { what: what.into(), reason: reason.into() }
    }
}
