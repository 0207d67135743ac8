use thiserror::Error;

use crate::rational::Rational;
use crate::reduce::ReductionOutcome;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("parameter {name} = {value} outside [0, 1]")]
    OutOfUnitInterval { name: &'static str, value: Rational },

    #[error("{0}")]
    InvalidArgument(String),

    #[error("operands belong to different rings (mode, cutoff, field or period system differ)")]
    RingMismatch,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("element is not a unit in its ring")]
    NotUnit,

    #[error("malformed complex: {0}")]
    Malformed(String),

    #[error("no boundary sample at s = {0}")]
    MissingSample(Rational),

    #[error("no continuation data from s = {from} to t = {to}")]
    MissingContinuation {
        from: Box<Rational>,
        to: Box<Rational>,
    },

    #[error("column {column} is not normalized to valuation (0, 0)")]
    NotNormalized { column: usize },

    #[error("cutoff must be positive")]
    NonPositiveCutoff,

    #[error("chain is not a cycle at t = {0}")]
    NotACycle(Rational),

    #[error("complex fails validation at s = {0}")]
    Unvalidated(Rational),

    #[error("reduction diverges ({})", .0.kind)]
    Divergence(Box<ReductionOutcome>),

    #[error("reduction exceeded {0} steps")]
    StepLimit(usize),

    #[error("infeasible model specification: {0}")]
    InfeasibleSpec(String),

    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}
