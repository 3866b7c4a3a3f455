use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix of dimension {dim} is not factorizable even with jitter {max_jitter:e}")]
    NotFactorizable { dim: usize, max_jitter: f64 },

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("{what} of dimension {dim} exceeds the configured cap {cap}")]
    DimensionTooLarge {
        what: &'static str,
        dim: usize,
        cap: usize,
    },

    #[error("CDF tolerance not met: estimate {log_prob} (log), error {err_estimate:e} > {tol:e}")]
    ToleranceNotMet {
        log_prob: f64,
        err_estimate: f64,
        tol: f64,
    },

    #[error("truncation region is numerically infeasible: {0}")]
    InfeasibleRegion(String),

    #[error("class label {label} outside 1..={classes}")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("index {index} out of range for dimension {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rejection sampler exceeded {tries} proposals")]
    MaxTriesExceeded { tries: usize },

    #[error("iteration limit {iterations} reached without convergence")]
    MaxIterReached { iterations: usize },

    #[error("quadrature oracle supports q <= {cap}, got q = {q}")]
    QOverCap { q: usize, cap: usize },
}
