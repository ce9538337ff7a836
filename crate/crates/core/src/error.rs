use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (shape mismatch, empty input, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("integration failed at step {step}: {reason}")]
    Integration { step: usize, reason: String },

    #[error("environment generation failed: {0}")]
    Generation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pipeline stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("case {index}: {source}")]
    Case {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
