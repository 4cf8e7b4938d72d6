use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("degenerate impedance: {0}")]
    DegenerateImpedance(&'static str),

    #[error("joules integral {j_i:.4} A²s exceeds the guard limit {limit:.4} A²s")]
    FuseOverflow { j_i: f64, limit: f64 },

    #[error("no fuse geometry satisfies the constraints: {0}")]
    Infeasible(String),

    #[error("non-finite sample at index {index}")]
    NonFinite { index: usize },

    #[error("diode states did not settle at step {step} after {iterations} iterations")]
    DiodeNonConvergence { step: usize, iterations: usize },

    #[error("energy balance residual {residual:.3}% exceeds {limit:.1}%")]
    EnergyBalance { residual: f64, limit: f64 },

    #[error("singular circuit matrix at step {step}")]
    SingularMatrix { step: usize },

    #[error("no sign change of ΔJ_I over k_c ∈ [{lo}, {hi}]: ΔJ_I(lo) = {f_lo:.3}%, ΔJ_I(hi) = {f_hi:.3}%")]
    NoBracket { lo: f64, hi: f64, f_lo: f64, f_hi: f64 },

    #[error("least-squares design matrix is rank deficient")]
    RankDeficient,

    #[error("need at least {needed} samples for the fit, got {got}")]
    NotEnoughSamples { needed: usize, got: usize },

    #[error("simulated joules integral is zero; relative error undefined")]
    ZeroJoulesIntegral,

    #[error("requested time {t} s lies outside the trace (duration {duration} s)")]
    OutOfRange { t: f64, duration: f64 },

    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
