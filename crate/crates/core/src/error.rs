use thiserror::Error;

/// Errors raised by the solvers and checks.
///
/// Several variants carry `f64` diagnostics regardless of the scalar type the
/// failing routine was instantiated with.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid grid configuration: {0}")]
    BadGridConfig(String),
    #[error("weight is not strictly positive at node {index} (r = {radius}, P = {value})")]
    NonPositiveWeight { index: usize, radius: f64, value: f64 },
    #[error("moment `{moment}` is not tail-stable (relative change {relative_change} between windows)")]
    DivergentMoment { moment: &'static str, relative_change: f64 },
    #[error("probe radius {radius} outside (0, {max}]")]
    ProbeOutOfRange { radius: f64, max: f64 },
    #[error("sampled slopes contradict the crossing hypothesis: {0}")]
    SlopeViolation(String),
    #[error("eigenfunction is not normalized (|∫Pφ² - 1| = {residual})")]
    NotNormalized { residual: f64 },
    #[error("no eigenpair attached to the problem instance")]
    EigenMissing,
    #[error("singular operator: pivot {pivot} at row {row}")]
    SingularOperator { row: usize, pivot: f64 },
    #[error("operator is not positive definite ({negative} non-positive pivots)")]
    IndefiniteOperator { negative: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("no convergence after {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("zero denominator in Rayleigh quotient")]
    ZeroDenominator,
    #[error("monotone iteration broke ordering at step {step} (violation {violation})")]
    MonotonicityBroken { step: usize, violation: f64 },
    #[error("interval is not ordered (margin {margin})")]
    Unordered { margin: f64 },
    #[error("no ramp radius up to R/2 keeps the supersolution below L = {level}")]
    RampFailed { level: f64 },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("initial branch point does not solve the problem (residual {residual})")]
    InitialPointInvalid { residual: f64 },
    #[error("continuation step underflow at t = {t} after {points} points")]
    StepUnderflow { t: f64, points: usize },
    #[error("branch contains no turning point in t")]
    NoFoldInBranch,
    #[error("query t = {t} is not below the fold estimate {alpha}")]
    QueryPastFold { t: f64, alpha: f64 },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
