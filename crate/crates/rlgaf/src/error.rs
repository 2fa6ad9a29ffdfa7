use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Core(#[from] rlgaf_core::Error),
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Transport(String),
}

pub type Result<T, E = RunError> = std::result::Result<T, E>;

impl RunError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io { path: path.into(), source }
    }

    /// Stable machine-readable tag printed ahead of the message on failure.
    pub fn kind(&self) -> &'static str {
        use rlgaf_core::Error as E;
        match self {
            RunError::Core(e) => match e {
                E::InvalidInput(_) | E::InvalidToken { .. } => "invalid-input",
                E::Structural(_) => "structural",
                E::Contract(_) => "contract",
                E::Divergence(_) => "divergence",
                E::IncompletePair(_) => "incomplete-pair",
                E::UnparseableReply { .. } => "unparseable-reply",
                E::Parse { .. } => "parse",
                E::Collapse(_) => "collapse",
            },
            RunError::Io { .. } => "io",
            RunError::Config(_) => "config",
            RunError::Format(_) => "format",
            RunError::Transport(_) => "transport",
        }
    }

    /// `error[<kind>]: <message>` with newlines flattened.
    pub fn reason_line(&self) -> String {
        let msg = self.to_string().replace(['\n', '\r'], " ");
        format!("error[{}]: {}", self.kind(), msg)
    }
}
