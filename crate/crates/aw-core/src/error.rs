//! Error type shared by every module of the crate.

use alloc::string::String;

/// Errors reported by constructors, solvers and experiment drivers.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("atom list is empty")]
    EmptyAtoms,
    #[error("coordinate {value} (step {step}, dim {dim}) lies outside [0, 1]")]
    CoordinateOutOfRange { step: usize, dim: usize, value: f64 },
    #[error("path carries {got} coordinates, expected {expected}")]
    PathLength { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("process shapes differ")]
    ShapeMismatch,
    #[error("negative weight {0}")]
    NegativeWeight(f64),
    #[error("weights must not all vanish")]
    ZeroMass,
    #[error("weight vector sums to {0}, expected 1")]
    NotNormalized(f64),
    #[error("non-finite cost entry at ({row}, {col})")]
    NonFiniteCost { row: usize, col: usize },
    #[error("sample set is empty")]
    EmptySample,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("operation is defined for d = 1 only")]
    NotOneDimensional,
    #[error("operation requires T = {expected}, got {got}")]
    BadHorizon { expected: usize, got: usize },
    #[error("oracle instance has {size} path pairs, limit is {limit}")]
    OracleTooLarge { size: usize, limit: usize },
    #[error("solver pivot limit exceeded")]
    IterationLimit,
    #[error("internal consistency check failed: {0}")]
    Internal(&'static str),
    #[error("tree expansion of {nodes} nodes exceeds the limit of {limit}")]
    ExpansionTooLarge { nodes: usize, limit: usize },
    #[error("no tractable reference discretization for this model")]
    NoTractableReference,
    #[error("log-log fit needs at least {0} points")]
    FitTooFewPoints(usize),
    #[error("log-log fit requires strictly positive data")]
    FitNonPositive,
}

pub type Result<T> = core::result::Result<T, Error>;
