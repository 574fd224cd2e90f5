use thiserror::Error;

/// Errors raised by the simulation and verification routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("heat-bath sampler stuck at site {site}: {proposals} proposals rejected")]
    SamplerStuck { site: usize, proposals: u64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("underpowered estimate: {got} replicas, need at least {need}")]
    Underpowered { got: usize, need: usize },

    #[error("invalid sector {0}")]
    InvalidSector(i64),

    #[error("operator too large for explicit construction: dimension {dim} exceeds {cap}")]
    TooLarge { dim: usize, cap: usize },

    #[error("no finite threshold: limiting ratio {limit} vs budget {budget}")]
    Infeasible { limit: f64, budget: f64 },

    #[error("config error(s):\n{}", .0.join("\n"))]
    Config(Vec<String>),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
