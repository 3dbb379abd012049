use alloc::string::String;

/// Errors produced by the models, solvers and simulator.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid service model: {0}")]
    InvalidService(String),

    #[error("invalid waiting menu: {0}")]
    InvalidMenu(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("markov chain has no unique stationary distribution")]
    NoUniqueStationary,

    #[error("state space has more than {cap} states; use a coarser waiting menu or fewer service values")]
    StateSpaceTooLarge { cap: usize },

    #[error("relative value iteration did not converge within {iterations} iterations (residual {residual:e}); try enabling the aperiodicity damping")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("threshold {threshold} is unreachable: the penalty stays below it for waits up to {limit} ticks")]
    ThresholdUnreachable { threshold: f64, limit: f64 },

    #[error("non-finite objective value {value} at {at}")]
    NonFiniteObjective { at: f64, value: f64 },

    #[error("state {0} is outside the solved state space and fallback is disabled")]
    UnresolvableState(String),

    #[error("policy induces {0} recurrent classes reachable from the reference state")]
    MultipleRecurrentClasses(usize),

    #[error("exhaustive search needs {count} policy evaluations, above the guard of {guard}; use a smaller instance")]
    SearchTooLarge { count: f64, guard: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
