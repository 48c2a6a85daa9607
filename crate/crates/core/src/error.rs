use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("query s = {s} lies outside the row extent [{lo}, {hi}]")]
    OutOfExtent { s: f64, lo: f64, hi: f64 },

    #[error("mean free path diverges (p2 = {p2})")]
    DivergentMean { p2: f64 },

    #[error("no root: target {target} not in achievable range ({lo}, {hi})")]
    NoRoot { target: f64, lo: f64, hi: f64 },

    #[error("path left the sampled extent at row {row} (x = {x}); widen the window")]
    ExtentExhausted { row: usize, x: f64 },

    #[error("object at x = {x} is at or behind the camera")]
    BehindCamera { x: f64 },

    #[error("time-to-transit undefined: image derivative {derivative:e} below floor {floor:e}")]
    UndefinedTau { derivative: f64, floor: f64 },

    #[error("feature lies on the projection singularity (denominator {denominator:e})")]
    ProjectionSingularity { denominator: f64 },

    #[error("goal coincides with the vehicle position")]
    CoincidentPoint,

    #[error("tangent construction undefined: rho = {rho} <= d = {d}")]
    UndefinedTangent { rho: f64, d: f64 },

    #[error("no gap of row {row} inside the view cone")]
    NoGapInCone { row: usize },

    #[error("need at least {needed} samples, got {got}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("malformed field document: {0}")]
    Format(String),
}

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
