use thiserror::Error;

/// Errors produced by the model, solvers and oracles.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("dimension {0} exceeds the supported maximum of {max}", max = crate::linalg::MAX_DIM)]
    DimensionTooLarge(usize),

    #[error("matrix is not symmetric (max asymmetry {0:.3e})")]
    NotSymmetric(f64),

    #[error("matrix is not positive semidefinite (smallest eigenvalue {0:.3e})")]
    NotPsd(f64),

    #[error("invalid probability vector: {0}")]
    InvalidProbability(String),

    #[error("average degree {d} must lie strictly between 0 and n = {n}")]
    DegreeOutOfRange { d: f64, n: usize },

    #[error("R is singular (smallest |eigenvalue| {0:.3e})")]
    SingularR(f64),

    #[error("parameters do not define a valid SBM (edge probabilities outside [0, 1])")]
    InvalidModel,

    #[error("tensor quadrature supports dimension at most 3, got {0}")]
    QuadratureDimension(usize),

    #[error("invalid evaluator settings: {0}")]
    InvalidEvaluator(String),

    #[error("matrix too close to the PSD cone boundary for step {step:.1e} (min eigenvalue {min_eig:.3e})")]
    ConeBoundary { step: f64, min_eig: f64 },

    #[error("iteration diverged at step {iteration} (|delta|_F = {norm:.3e})")]
    Diverged { iteration: usize, norm: f64 },

    #[error("instance too large for exact enumeration: {0}")]
    TooLargeForEnumeration(String),

    #[error("Bernoulli parameter {0} lies outside [0, 1]")]
    BernoulliOutOfRange(f64),

    #[error("graph does not match model: {0}")]
    GraphMismatch(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
