use thiserror::Error;

use crate::expr::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("ellipticity violated: a(x) = {value} at x = {x}")]
    Ellipticity { x: f64, value: f64 },

    #[error("eigen-solve failed: {0}")]
    EigenSolve(String),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("point {0:?} lies outside the domain")]
    OutsideDomain(Vec<f64>),

    #[error("field cannot be differentiated to order {0}")]
    NotDifferentiable(usize),

    #[error("input is not 2π-periodic in τ (endpoint mismatch {0:e})")]
    NotPeriodic(f64),

    #[error("fast part has nonzero τ-mean ({0:e})")]
    NonZeroMean(f64),

    #[error("missing derivative data: {0}")]
    MissingDerivative(String),

    #[error("time grid under-resolves the fast scale: step {step:e} > {limit:e}")]
    UnderResolved { step: f64, limit: f64 },

    #[error("time grids differ")]
    GridMismatch,

    #[error("degenerate leading coefficient: |a({t})| = {value:e} below {floor:e}")]
    DegenerateLeadingCoefficient { t: f64, value: f64, floor: f64 },

    #[error("Λ_{mode}(t0) = {value:e} is below the floor {floor:e}")]
    VanishingProfile { mode: usize, value: f64, floor: f64 },

    #[error("observation point is degenerate: {0}")]
    DegeneratePoint(String),

    #[error("missing observation data: {0}")]
    MissingData(&'static str),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("expression error: {0}")]
    Expr(#[from] ParseError),

    #[error("inadmissible data: {0}")]
    Inadmissible(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Bad input or inadmissible data, as opposed to a failure while computing.
    pub fn is_invalid_input(&self) -> bool {
        !matches!(
            self,
            Error::EigenSolve(_) | Error::GridMismatch | Error::NonFinite(_) | Error::Io(_) | Error::LengthMismatch { .. }
        )
    }
}
