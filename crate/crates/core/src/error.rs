use std::path::PathBuf;

use thiserror::Error;

use crate::chain::Diagnostic;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid kinematic chain: {}", join_diagnostics(.0))]
    InvalidChain(Vec<Diagnostic>),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("{stage} diverged at iteration {iteration}: non-finite loss")]
    FitDiverged {
        stage: &'static str,
        iteration: usize,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed document {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    /// True for errors caused by the filesystem rather than by the content
    /// of a document or a parameter.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

fn join_diagnostics(d: &[Diagnostic]) -> String {
    d.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}
