use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// A propagation step with a non-positive or oversized time delta, which
    /// usually means a sensor tick was dropped or duplicated.
    #[error("invalid step: dt = {dt} s (expected 0 < dt <= {max} s)")]
    InvalidStep { dt: f64, max: f64 },

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("timestamps must be strictly increasing ({prev} followed by {next})")]
    NonMonotonicTimestamp { prev: f64, next: f64 },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("pose graph is not connected over odometry edges")]
    DisconnectedGraph,

    #[error("no fixed node in pose graph")]
    NoGauge,

    #[error("information matrix of edge {edge} is not symmetric positive definite")]
    NotPositiveDefinite { edge: usize },

    #[error("linear system is singular or indefinite")]
    SingularSystem,

    #[error("line {line}: {message} (token `{token}`)")]
    Parse {
        line: usize,
        token: String,
        message: String,
    },

    #[error("configuration error at `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("non-finite value in field `{0}`")]
    NonFinite(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(line: usize, token: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            token: token.into(),
            message: message.into(),
        }
    }

    pub(crate) fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }
}
