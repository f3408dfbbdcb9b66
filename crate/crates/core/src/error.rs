use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("document {doc_id}: invalid UTF-8 at byte offset {offset}")]
    Decode { doc_id: usize, offset: usize },

    #[error("not a numeral: {0:?}")]
    NotANumeral(String),

    #[error("numeral {0:?} overflows the representable range")]
    NumeralRange(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("input already contains reserved token {token:?} at position {position}")]
    AlreadyAugmented { token: String, position: usize },

    #[error("corrupt augmented stream: {0}")]
    CorruptAugmentation(String),

    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch} (learning rate {lr:e})")]
    NonFiniteLoss {
        loss: f64,
        epoch: usize,
        batch: usize,
        lr: f64,
    },

    #[error("numeral {0} does not render to a single token")]
    UnsupportedShape(String),

    #[error("infeasible probe cell: {0}")]
    InfeasibleSplit(String),

    #[error("cannot compute cosine similarity: embedding for {0} has zero norm")]
    ZeroNorm(f64),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stage {stage:?} requires missing upstream stage(s): {missing}")]
    Dependency { stage: String, missing: String },

    #[error("stale artifact {path}: checksum does not match manifest")]
    Stale { path: PathBuf },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error in {context}: {message}")]
    Format { context: String, message: String },
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub fn format(context: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Format {
            context: context.into(),
            message: message.into(),
        }
    }

    /// Process exit code used by the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Validation(_) | Error::Config(_) => 2,
            Error::Dependency { .. } | Error::Stale { .. } => 3,
            _ => 4,
        }
    }
}
