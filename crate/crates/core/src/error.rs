use thiserror::Error;

use crate::model::Violation;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A single argument failed validation.
    #[error("{0}")]
    InvalidArgument(String),

    /// One or more type invariants are violated; every violation is listed.
    #[error("invalid input: {}", join_violations(.0))]
    Invalid(Vec<Violation>),

    #[error("amplitude overflow/underflow in branch {branch}")]
    AmplitudeOverflow { branch: usize },

    #[error("state degenerate: every branch amplitude has underflowed")]
    StateDegenerate,

    #[error("{0}")]
    Statistics(String),

    #[error("branches not disjoint: {0}")]
    BranchesNotDisjoint(String),

    #[error("stencil reach violated: supports are {gap} sites apart, need at least 2")]
    StencilReachViolated { gap: i64 },
}

fn join_violations(v: &[Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl Error {
    pub(crate) fn arg(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn stats(msg: impl Into<String>) -> Self {
        Error::Statistics(msg.into())
    }
}
