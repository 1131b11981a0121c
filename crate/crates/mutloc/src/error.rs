//! Error type shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("time {t} outside spline support [{lo}, {hi}]")]
    OutOfSupport { t: f64, lo: f64, hi: f64 },

    #[error("time {t} outside trajectory range [{lo}, {hi}]")]
    OutOfRange { t: f64, lo: f64, hi: f64 },

    #[error("trajectory too short ({0} samples)")]
    TooShort(usize),

    #[error("inter-robot distance {dist} m below 1e-6 m at t={t}")]
    CoincidentRobots { t: f64, dist: f64 },

    #[error("need at least {min} measurements, got {got}")]
    TooFewMeasurements { got: usize, min: usize },

    #[error("marginalization block numerically singular (condition {0:.3e})")]
    SingularMarginalization(f64),

    #[error("matrix numerically rank deficient (smallest singular value {0:.3e})")]
    DegenerateMatrix(f64),

    #[error("not a valid rotation matrix: {0}")]
    NotARotation(String),

    #[error("homogenizing entry too small after extraction (|y| = {0:.3e})")]
    DegenerateSolution(f64),

    #[error("lifted offset readouts disagree: {lifted:.4} s vs {ratio:.4} s")]
    InconsistentLift { lifted: f64, ratio: f64 },

    #[error("solution matrix has no positive eigenvalue")]
    ZeroSolution,

    #[error("SDP solver failed: {0}")]
    SolverFailure(String),

    #[error("parse error at line {line}: {reason}")]
    Parse { line: usize, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
