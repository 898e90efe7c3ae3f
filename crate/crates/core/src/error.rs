use thiserror::Error;

/// Errors produced by the analytic engine, the optimizers and the simulator.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("burst length must be at least 1")]
    ZeroBurst,

    #[error("transition from {from} to {to} would increase the dofs needed")]
    BackwardTransition { from: String, to: String },

    #[error("chain is not absorbing: state {state} cannot leave itself (self-loop probability {self_loop})")]
    NonAbsorbing { state: String, self_loop: f64 },

    #[error("link with erasure probability 1 can never complete")]
    InfeasibleLink,

    #[error("target probability not reached within {cap} rounds")]
    RoundCapExceeded { cap: u64 },

    #[error("policy covers M={policy} but parameters have M={params}")]
    PolicyMismatch { policy: usize, params: usize },

    #[error("invalid policy: {0}")]
    InvalidPolicy(String),

    #[error("round robin analysis requires {0}")]
    RoundRobinRestriction(String),

    #[error("field element {0} is not invertible")]
    NotInvertible(u32),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
