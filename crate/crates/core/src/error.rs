use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("commit stream line {line}: {message}")]
    Stream { line: usize, message: String },

    #[error("commit graph of {repo_id} has a cycle through {hash}")]
    Cycle { repo_id: String, hash: String },

    #[error("duplicate commit {hash} in {repo_id}")]
    DuplicateCommit { repo_id: String, hash: String },

    #[error("git: {0}")]
    Git(String),

    #[error("no commit streams found")]
    NoStreams,

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("statistics: {0}")]
    Stats(String),

    #[error("synthetic spec rejected: {0}")]
    SynthSpec(String),

    #[error("unknown author {0}")]
    UnknownAuthor(String),

    #[error("unknown figure id {given:?}; valid ids are {valid}")]
    UnknownFigure { given: String, valid: String },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by a broken internal invariant rather than
    /// by the input data.
    pub fn is_internal(&self) -> bool {
        matches!(self, Error::Invariant(_))
    }
}
