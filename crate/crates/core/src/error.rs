use thiserror::Error;

use crate::pmp::SweepReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("atom count mismatch: {left} vs {right}")]
    CountMismatch { left: usize, right: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("exact assignment limited to {cap} atoms (got {n}); use w1_sinkhorn for larger measures")]
    AssignmentCap { n: usize, cap: usize },

    #[error("non-finite {what} at step {step}")]
    NonFinite { what: &'static str, step: usize },

    #[error("label left its invariant set at step {step} (violation {violation:e})")]
    LabelInvariant { step: usize, violation: f64 },

    #[error("oracle budget exceeded: {evaluations} evaluations > {budget}")]
    BudgetExceeded { evaluations: u128, budget: u128 },

    #[error("forward-backward sweep diverged after {} iterations", .0.iterations)]
    Diverged(Box<SweepReport>),

    #[error("unknown problem `{0}`")]
    UnknownProblem(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("control value {value:?} lies outside the admissible set")]
    OutsideControlSet { value: Vec<f64> },

    #[error("control field undefined at x = {x:?} (node {node})")]
    FieldUndefined { node: usize, x: Vec<f64> },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
