use thiserror::Error;

/// Errors produced anywhere in the simulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("unstable Robin spectrum: alpha = {alpha} admits a k^2 < 0 bound solution")]
    UnstableRobin { alpha: f64 },

    #[error("{what} did not converge after {iterations} iterations")]
    NoConvergence { what: &'static str, iterations: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("unphysical covariance: symplectic eigenvalue {nu} below 1/2")]
    Unphysical { nu: f64 },

    #[error("eigen-solver failure: {0}")]
    EigenSolver(String),

    #[error("empty region mask")]
    EmptyMask,

    #[error("regions overlap on {0} pixel(s)")]
    Overlap(usize),

    #[error("grid too small: {0}")]
    GridTooSmall(String),

    #[error("no rectangle of {0} pixels fits the sweep region")]
    NoFactorization(usize),

    #[error("rank-deficient regression: {0}")]
    RankDeficient(String),

    #[error("too few points: need {needed}, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("wrong labelling: expected {0}")]
    Labelling(&'static str),

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
