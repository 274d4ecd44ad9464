use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("operator is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("basis mismatch: expected {expected:?}, got {found:?}")]
    BasisMismatch {
        expected: crate::model::Basis,
        found: crate::model::Basis,
    },

    #[error("dBm drive amplitude requires a power calibration")]
    MissingCalibration,

    #[error("linear system is singular (condition number {condition:e}, residual {residual:e})")]
    Singular { condition: f64, residual: f64 },

    #[error("time step failed to converge after {halvings} halvings (last change {change:e})")]
    StepSize { halvings: u32, change: f64 },

    #[error("demodulation window too short: {reason}")]
    DemodulationWindow { reason: String },

    #[error("same-state transition {0} -> {0} has no closed-form sideband; the emitter is transparent there")]
    SameState(crate::dressed::Label),

    #[error("invalid sweep: {0}")]
    InvalidSweep(String),

    #[error("unsupported export format `{0}`")]
    UnsupportedFormat(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error("fit data: {0}")]
    FitData(String),

    #[error("unknown strategy `{name}` (available: {available})")]
    UnknownStrategy { name: String, available: String },
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
