use std::path::PathBuf;

/// Errors produced by the resilience toolkit.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid time series: {0}")]
    InvalidSeries(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("integration error at t = {t}: non-finite derivative")]
    Integration { t: f64 },

    #[error("range error: [{from}, {to}] is outside the span [{start}, {end}]")]
    Range {
        from: f64,
        to: f64,
        start: f64,
        end: f64,
    },

    #[error(
        "no convergence after {iterations} iterations: best iterate ({:.6e}, {:.6e}), residual norm {residual:.3e}",
        best.0,
        best.1
    )]
    Convergence {
        iterations: usize,
        best: (f64, f64),
        residual: f64,
    },

    #[error("invalid impact profile: {0}")]
    InvalidProfile(String),

    #[error("unsupported coefficients: {0}")]
    UnsupportedCoefficients(String),

    #[error("steady state undefined when malware and bonware impacts are both zero")]
    UndefinedSteadyState,

    #[error("degenerate baseline: {0}")]
    DegenerateBaseline(String),

    #[error("grid mismatch: {0}")]
    Alignment(String),

    #[error("objective mismatch: {0}")]
    Mismatch(String),

    #[error("invalid utility weights: {0}")]
    InvalidWeights(String),

    #[error("insufficient data: need at least {needed} values, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("curve minimum lies at the series boundary; no recovery observed")]
    NoRecovery,

    #[error("fit infeasible: {0}")]
    FitInfeasible(String),

    #[error("no attack detected")]
    NoAttackDetected,

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
