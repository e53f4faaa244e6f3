//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid dimension must be 2 or 3, got {0}")]
    InvalidDimension(usize),
    #[error("grid resolution must be a power of two with n >= 8, got {0}")]
    InvalidResolution(usize),
    #[error("field has {got} samples, grid expects {expected}")]
    ShapeMismatch { got: usize, expected: usize },
    #[error("heat semigroup time must be >= 0, got {0}")]
    NegativeDiffusionTime(f64),
    #[error("Lq norm requires q >= 1, got {0}")]
    InvalidExponent(f64),
    #[error("potential coefficients require a > 0 and c > 0, got a = {a}, c = {c}")]
    InvalidPotential { a: f64, c: f64 },
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error("CFL violation at t = {t}: dt * max|u| * (n/2) = {value} exceeds limit {limit}")]
    CflViolation { t: f64, value: f64, limit: f64 },
    #[error("non-finite values detected in the state at t = {t}")]
    NonFiniteState { t: f64 },
    #[error("fit needs at least {min} positive samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("fit requires positive values, sample {index} is {value}")]
    NonPositiveSample { index: usize, value: f64 },
    #[error("runs are not comparable: {0}")]
    MismatchedRuns(String),
    #[error("cylinder radius {r} too large: 4r must stay below pi on the periodic box")]
    RadiusTooLarge { r: f64 },
    #[error("trajectory window [{have_lo}, {have_hi}] does not cover [{need_lo}, {need_hi}]")]
    WindowTooShort {
        have_lo: f64,
        have_hi: f64,
        need_lo: f64,
        need_hi: f64,
    },
    #[error("unsupported cutoff: {0}")]
    UnsupportedCutoff(String),
    #[error("criterion iteration needs at least 2 radii, got {0}")]
    TooFewRadii(usize),
    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
