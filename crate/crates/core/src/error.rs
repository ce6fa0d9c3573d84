use thiserror::Error;

use crate::kernels::Regime;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("t = {t} lies outside the tabulated kernel (extent {extent}) and no tail exponent is set")]
    OutOfDomain { t: f64, extent: f64 },

    #[error("kernel tail is not integrable (tail exponent {exponent} >= -1)")]
    NonIntegrableTail { exponent: f64 },

    #[error("first moment of the kernel is infinite")]
    InfiniteMoment,

    #[error("{op} requires the {required:?} regime, kernel is {actual:?} (mass gap {mass_gap:e})")]
    Regime {
        op: &'static str,
        required: Regime,
        actual: Regime,
        mass_gap: f64,
    },

    #[error("invalid grid: {0}")]
    Grid(String),

    #[error("resolvent is not square integrable: fitted decay exponent {exponent:.4} >= -1/2")]
    NotSquareIntegrable { exponent: f64 },

    #[error("lag {lag} is not admissible: {reason}")]
    Lag { lag: f64, reason: String },

    #[error("argument {name} = {value} outside its domain {domain}")]
    Domain {
        name: &'static str,
        value: f64,
        domain: &'static str,
    },

    #[error("gamma function pole at {0}")]
    GammaPole(f64),

    #[error("target decay has non-negative derivative {derivative:e} at t = {t}")]
    NonDecreasingTarget { t: f64, derivative: f64 },

    #[error("condition integral diverges: fitted log-power index {beta:.4} <= 1/2, no stationary solution")]
    DivergentCondition { beta: f64 },

    #[error("series too short: {0}")]
    SeriesTooShort(String),

    #[error("MA truncation {m} too small: neglected tail variance {tail:e} exceeds {bound:e}")]
    Truncation { m: usize, tail: f64, bound: f64 },

    #[error("power-law fit failed: {0}")]
    Fit(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Errors caused by the configuration rather than by the numerics.
    pub fn is_config(&self) -> bool {
        matches!(self, Error::Config(_) | Error::Regime { .. })
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::OutOfDomain { .. } => "out_of_domain",
            Error::NonIntegrableTail { .. } => "non_integrable_tail",
            Error::InfiniteMoment => "infinite_moment",
            Error::Regime { .. } => "regime",
            Error::Grid(_) => "grid",
            Error::NotSquareIntegrable { .. } => "not_square_integrable",
            Error::Lag { .. } => "lag",
            Error::Domain { .. } => "domain",
            Error::GammaPole(_) => "gamma_pole",
            Error::NonDecreasingTarget { .. } => "non_decreasing_target",
            Error::DivergentCondition { .. } => "divergent_condition",
            Error::SeriesTooShort(_) => "series_too_short",
            Error::Truncation { .. } => "truncation",
            Error::Fit(_) => "fit",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
        }
    }
}
