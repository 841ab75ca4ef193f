use thiserror::Error;

/// Errors raised by the pricing and solving routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParams { name: &'static str, reason: String },

    #[error("{what}: time {time} lies outside the admissible horizon [0, {horizon}]")]
    Horizon {
        what: &'static str,
        time: f64,
        horizon: f64,
    },

    #[error("{0}")]
    Domain(String),

    #[error("root search failed at level {level}, node {node}: {reason} (last residual {residual:e})")]
    NonConvergence {
        level: usize,
        node: usize,
        residual: f64,
        reason: String,
        trace: Vec<f64>,
    },

    #[error("solver integrity violated at level {level}, node {node}: {reason}")]
    Integrity {
        level: usize,
        node: usize,
        reason: String,
    },

    #[error("density grid lost {leaked:e} of probability mass (limit {limit:e})")]
    Accuracy { leaked: f64, limit: f64 },

    #[error("lattice configuration: {0}")]
    Lattice(String),

    #[error("io: {0}")]
    Io(String),

    #[error("format: {0}")]
    Format(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Format(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
