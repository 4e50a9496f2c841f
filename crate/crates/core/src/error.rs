use thiserror::Error;

use crate::smcabc::SmcTrace;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parameter outside support: {0}")]
    OutsideSupport(String),

    #[error("simulation overflow: more than {cap} events in one trajectory")]
    SimulationOverflow { cap: u64 },

    #[error("numerical overflow: {0}")]
    NumericalOverflow(String),

    #[error("shape mismatch: expected length {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },

    #[error("not enough samples: need at least {need}, got {got}")]
    NotEnoughSamples { need: usize, got: usize },

    #[error("all weights are zero")]
    ZeroWeights,

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("missing proposal cache entry for sample {sample} of round {round}")]
    MissingCache { round: usize, sample: usize },

    #[error("simulation failed in round {round}, sample {index}: {source}")]
    Simulation {
        round: usize,
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("simulation budget of {budget} exhausted before the first population completed")]
    BudgetExhausted { budget: usize, partial: Box<SmcTrace> },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short stable tag used by the CLI's machine-readable error line.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "invalid_argument",
            Error::OutsideSupport(_) => "outside_support",
            Error::SimulationOverflow { .. } => "simulation_overflow",
            Error::NumericalOverflow(_) => "numerical_overflow",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::NotEnoughSamples { .. } => "not_enough_samples",
            Error::ZeroWeights => "zero_weights",
            Error::Degenerate(_) => "degenerate",
            Error::MissingCache { .. } => "missing_cache",
            Error::Simulation { .. } => "simulation",
            Error::BudgetExhausted { .. } => "budget_exhausted",
            Error::Config(_) => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
