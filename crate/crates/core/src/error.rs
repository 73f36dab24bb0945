use thiserror::Error;

use crate::scalar::SchemeId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("value {value} outside the domain {domain}")]
    Domain { value: f64, domain: &'static str },

    #[error("{scheme} is not applicable: {reason}")]
    NotApplicable { scheme: SchemeId, reason: String },

    #[error("precondition failed for {scheme}: {reason}")]
    PreconditionFailed { scheme: SchemeId, reason: String },

    #[error("steady-state system is singular (determinant {determinant:e})")]
    SingularSystem { determinant: f64 },

    #[error("invalid path specification: {0}")]
    InvalidSpec(String),

    /// The drift-updated value left (0,1): the step size is too large for this state.
    #[error("step size violation: y = {y}, drift-updated value = {y_tilde}, dt = {dt}")]
    StepSizeViolation { y: f64, y_tilde: f64, dt: f64 },

    /// Raised by path drivers; `node` is the index of the node being computed.
    #[error("at node {node}: {source}")]
    AtNode { node: usize, source: Box<Error> },

    #[error("{scheme} left the state domain at node {node} (value {value})")]
    ExitedDomain { scheme: SchemeId, node: usize, value: f64 },

    #[error("every path was rejected by the exit filter")]
    AllPathsRejected,

    #[error("path {path}, dt = 2^-{dt_exp}: {source}")]
    PathFailure { path: u64, dt_exp: u32, source: Box<Error> },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn at_node(self, node: usize) -> Error {
        Error::AtNode { node, source: Box::new(self) }
    }

    /// Innermost error, skipping node/path context wrappers.
    pub fn root(&self) -> &Error {
        match self {
            Error::AtNode { source, .. } | Error::PathFailure { source, .. } => source.root(),
            other => other,
        }
    }
}
