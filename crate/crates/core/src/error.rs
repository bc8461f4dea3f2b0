use thiserror::Error;

/// Errors produced by the solvers and the CLI plumbing.
#[derive(Debug, Error)]
pub enum QgError {
    #[error("invalid dimension: N = {0}, need N >= 1")]
    InvalidDimension(i64),

    #[error("invalid exponent: q = {0}, need 0 < q <= q* (q* = 2 + 4/N)")]
    InvalidExponent(f64),

    #[error("invalid profile mass: {0}, need > 0")]
    InvalidMass(f64),

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("shooting bracket not found in [{lo}, {hi}]: {detail}")]
    NoBracket { lo: f64, hi: f64, detail: String },

    #[error("ODE integration failed: {0}")]
    IntegrationError(String),

    #[error("rescaled support exceeds the target mesh (needed {needed}, have {available})")]
    DomainOverflow { needed: f64, available: f64 },

    #[error("field not normalized: |mass - 1| = {0:e} exceeds 1e-6")]
    NotNormalized(f64),

    #[error("non-finite energy encountered at iteration {0}")]
    NumericalBlowup(usize),

    #[error("iteration cap {cap} reached without convergence or divergence (grad norm {grad_norm:e})")]
    NoConvergence { cap: usize, grad_norm: f64 },

    #[error("backtracking step underflow (< 1e-14) at iteration {0}")]
    Stall(usize),

    #[error("sweep member q = {q} failed: {source}")]
    PartialSweep {
        q: f64,
        #[source]
        source: Box<QgError>,
    },

    #[error("threshold bracket [{lo}, {hi}] endpoints classify identically ({verdict})")]
    BadBracket { lo: f64, hi: f64, verdict: String },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("csv parse error: {0}")]
    CsvParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, QgError>;
