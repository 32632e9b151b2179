use thiserror::Error;

/// Errors raised by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument {value} outside domain {domain}")]
    Domain { value: f64, domain: String },

    #[error("integrand is not finite at quadrature node {node} (x = {x})")]
    NonFinite { node: usize, x: f64 },

    #[error("{what} did not converge: last iterate {last}, residual {residual:e}")]
    NoConvergence {
        what: &'static str,
        last: f64,
        residual: f64,
    },

    #[error("sequence construction broke down at k = {k}: q - Gamma^2 = {remaining:e}")]
    SequenceBreakdown { k: usize, remaining: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("matrix is not square ({rows} x {cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("degenerate state at stage {k}: Gram-Schmidt denominator {denominator:e}")]
    Degenerate { k: usize, denominator: f64 },

    #[error("stage {k} is not below system size {n}")]
    StageTooLarge { k: usize, n: usize },

    #[error("invariant violated at stage {k}: {detail}")]
    InvariantViolated { k: usize, detail: String },

    #[error("enumeration over N = {n} exceeds the limit N <= {max}")]
    EnumerationLimit { n: usize, max: usize },

    #[error("transient matrices rho^(s) were not retained; rerun with transients enabled")]
    MissingTransients,

    #[error("need at least {needed} replicas, got {got}")]
    InsufficientReplicas { needed: usize, got: usize },

    #[error("rs free energy check failed: grid value {grid:.12} at q = {q_grid} below stationary value {stationary:.12}")]
    RsGridCheck {
        stationary: f64,
        grid: f64,
        q_grid: f64,
    },

    #[error("malformed disorder file: {0}")]
    Format(String),

    #[error("invalid experiment config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for failures of a numerical procedure (as opposed to bad input or I/O).
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::NonFinite { .. }
                | Error::NoConvergence { .. }
                | Error::SequenceBreakdown { .. }
                | Error::Degenerate { .. }
                | Error::InvariantViolated { .. }
                | Error::RsGridCheck { .. }
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
