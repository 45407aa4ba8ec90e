use thiserror::Error;

/// Errors produced by fitting, LR evaluation, calibration and interval inversion.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("parameter out of domain: {0}")]
    ParamDomain(String),

    #[error("value {value} outside the support of {family}")]
    Support { family: String, value: f64 },

    #[error("need at least {min} observations, got {got}")]
    InsufficientData { min: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("fit did not converge after {iterations} iterations: {detail}")]
    FitFailed { iterations: usize, detail: String },

    #[error("LR evaluation failed at y = {y}: {detail}")]
    LrEval { y: f64, detail: String },

    #[error("no failures observed before the censoring time")]
    NoFailures,

    #[error("degenerate regression design: {0}")]
    Design(String),

    #[error("calibration failed: {0}")]
    Calibration(String),

    #[error("bracket expansion exhausted on the {side} side after {expansions} expansions")]
    UnboundedSide {
        side: &'static str,
        expansions: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("experiment failed: {0}")]
    Experiment(String),
}

pub type Result<T> = std::result::Result<T, Error>;
