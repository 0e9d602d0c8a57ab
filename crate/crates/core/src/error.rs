use thiserror::Error;

use crate::ArticleId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A simulated vote probability left the unit interval.
    #[error("vote probability {prob} exceeds 1 for article {article}; rescale qualities")]
    ProbabilityOverflow { article: ArticleId, prob: f64 },

    #[error("malformed input: {0}")]
    Malformed(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("unknown article {0}")]
    UnknownArticle(ArticleId),

    #[error("unknown position {0}")]
    UnknownPosition(u32),

    #[error("no observations left after exclusions")]
    EmptyDesign,

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
