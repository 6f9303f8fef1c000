use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the conversion pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A setting is out of range or a required asset is missing.
    #[error("configuration error: {0}")]
    Config(String),

    /// Input data violates an operation's precondition.
    #[error("input error: {0}")]
    Input(String),

    /// A serialized file does not follow its format.
    #[error("format error in {field}: {detail}")]
    Format { field: &'static str, detail: String },

    /// Tensor or frame dimensions disagree.
    #[error("shape error: {0}")]
    Shape(String),

    /// Source/target utterances cannot be paired.
    #[error("pairing error: {0}")]
    Pairing(String),

    /// Training produced a NaN or infinite loss.
    #[error("non-finite loss at epoch {epoch}, utterance {utt_id}: {detail}")]
    NonFinite {
        epoch: usize,
        utt_id: String,
        detail: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("wav error: {0}")]
    Wav(#[from] hound::Error),

    /// A pipeline stage failed; wraps the underlying error.
    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn format(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            field,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs or settings rather than
    /// by a fault inside the library.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::NonFinite { .. } => false,
            Error::Stage { source, .. } => source.is_user_error(),
            _ => true,
        }
    }

    pub(crate) fn in_stage(stage: &'static str) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            stage,
            source: Box::new(e),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
