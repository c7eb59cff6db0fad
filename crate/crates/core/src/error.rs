use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::MsdTag;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("unparseable tag {0:?}")]
    BadTag(String),
    #[error("lemma {lemma:?} has conflicting forms for {tag}: {first:?} vs {second:?}")]
    ConflictingForms {
        lemma: String,
        tag: MsdTag,
        first: String,
        second: String,
    },
    #[error("no ending of the {tag} inventory matches {form:?}")]
    NoEnding { form: String, tag: MsdTag },
    #[error("ending inventory: {0}")]
    Inventory(String),
    #[error("bad serialized example: {0}")]
    Serialization(String),
    #[error("{what}: requested {requested}, pool has {available}")]
    PoolTooSmall {
        what: String,
        requested: usize,
        available: usize,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("missing artifact {path}: run `{stage}` first")]
    MissingArtifact { path: PathBuf, stage: String },
    #[error("stage {stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
    #[error("training diverged at update {update}; last good checkpoint {checkpoint:?}")]
    Diverged { update: usize, checkpoint: Option<PathBuf> },
    #[error(transparent)]
    Nn(#[from] morphome_nn::NnError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn io_err(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
    let path = path.into();
    move |source| Error::Io { path, source }
}

impl Error {
    /// Whether the error stems from user input (exit code 1) rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        match self {
            Error::Stage { source, .. } => source.is_user_error(),
            Error::Nn(_) | Error::Diverged { .. } => false,
            _ => true,
        }
    }
}
