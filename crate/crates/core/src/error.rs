use thiserror::Error;

use crate::graph::FamilyViolation;

/// Errors produced by graph construction, model evaluation and the fitters.
#[derive(Debug, Error)]
#[non_exhaustive]
pub enum Error {
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("duplicate vertex `{0}`")]
    DuplicateVertex(String),

    #[error("duplicate edge {0} <-> {1}")]
    DuplicateEdge(String, String),

    #[error("self-loop at vertex `{0}`")]
    SelfLoop(String),

    #[error("invalid complete-set family: {0}")]
    InvalidFamily(FamilyViolation),

    #[error("{0} is not positive definite")]
    NotPositiveDefinite(&'static str),

    #[error("{0} is singular")]
    Singular(&'static str),

    #[error("entry ({row}, {col}) is outside the graph's free set but is not zero")]
    PatternViolation { row: usize, col: usize },

    #[error("matrix is not symmetric at ({row}, {col})")]
    NotSymmetric { row: usize, col: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("line {line}{}: {message}", column.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse { line: usize, column: Option<usize>, message: String },

    #[error("empirical likelihood problem is infeasible: {0}")]
    Infeasible(String),

    #[error("solver did not converge: {0}")]
    NoConvergence(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
