use thiserror::Error;

/// Errors raised by the simulator, metrics, and oracles.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("input out of domain: {0}")]
    Domain(String),
    #[error("population needs at least 2 agents, got {0}")]
    InvalidPopulation(usize),
    #[error("agent {agent} holds {available} energy units, cannot send {requested}")]
    InsufficientEnergy {
        agent: usize,
        available: f64,
        requested: f64,
    },
    #[error("invalid pair ({0}, {1})")]
    InvalidPair(usize, usize),
    #[error("total energy is zero; the energy distribution is undefined")]
    DegenerateDistribution,
    #[error("distribution lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("scripted schedule exhausted after {0} pairs")]
    ScheduleExhausted(usize),
    #[error("enumeration of {pairs} pairs exceeds the limit of {limit}")]
    EnumerationLimit { pairs: u64, limit: u64 },
    #[error("wrong regime: {0}")]
    WrongRegime(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
