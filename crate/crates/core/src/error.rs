use thiserror::Error;

/// Errors raised by the auction, prediction, strategy and analysis routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} goods, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("capability exceeded: {0}")]
    Capability(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("prediction grids differ: {0}")]
    GridMismatch(String),

    #[error("cannot parse strategy at `{token}`: {message}")]
    Parse { token: String, message: String },

    #[error("unknown strategy `{0}`")]
    UnknownStrategy(String),

    #[error("payoff table is incomplete; missing profiles: {}", .0.join(", "))]
    Incomplete(Vec<String>),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("malformed input: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::Dimension { expected, got })
    }
}
