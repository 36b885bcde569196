use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: `{field}` {reason}")]
    Bound { field: &'static str, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("malformed override `{0}` (expected key=value)")]
    MalformedOverride(String),

    #[error("config parse error: {0}")]
    Parse(String),

    #[error("expected a {expected} checkpoint, found {found}")]
    SpecMismatch {
        expected: &'static str,
        found: &'static str,
    },
}

impl ConfigError {
    pub(crate) fn bound(field: &'static str, reason: impl Into<String>) -> Self {
        ConfigError::Bound {
            field,
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Config(#[from] ConfigError),

    #[error("episode finished after {0} steps; call reset")]
    EpisodeFinished(usize),

    #[error("action index {index} out of range for {n_actions} actions")]
    ActionOutOfRange { index: usize, n_actions: usize },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("non-finite {what} at update {update}")]
    NonFinite { what: String, update: usize },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
