use thiserror::Error;

use crate::graph::Edge;

/// Errors produced by the modelling engine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("edge {edge} is not in the transition graph")]
    UnknownEdge { edge: Edge },

    #[error("individual {individual}: transition {from} -> {to} is not an edge of the graph")]
    IllegalTransition {
        individual: usize,
        from: usize,
        to: usize,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric positive definite: {0}")]
    Factorization(String),

    #[error("individual {individual}: {term} log-likelihood term is not finite")]
    NonFinite {
        individual: usize,
        term: &'static str,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("simulation exceeded {limit} transitions")]
    TransitionLimit { limit: usize },

    #[error("fit aborted after {0} consecutive non-finite gradients")]
    Diverged(usize),
}

pub type Result<T> = std::result::Result<T, Error>;
