use thiserror::Error;

/// Errors produced anywhere in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaiError {
    #[error("{value} lies outside the mean interval of {family}")]
    Domain { family: String, value: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("infeasible target: {0}")]
    Infeasible(String),

    #[error("solver did not converge: {what} (residual {residual:e})")]
    NonConvergence { what: String, residual: f64 },

    #[error("invalid instance: {0}")]
    Instance(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("regime error: {0}")]
    Regime(String),

    #[error("missing coin: a randomized policy needs a uniform draw")]
    MissingCoin,

    #[error("search budget exceeded: {points} lattice points > {budget}")]
    Budget { points: u128, budget: u128 },

    #[error("step size underflow at N = {at} (allocations {allocations:?})")]
    StepUnderflow { at: f64, allocations: Vec<f64> },
}

pub type Result<T> = std::result::Result<T, BaiError>;
