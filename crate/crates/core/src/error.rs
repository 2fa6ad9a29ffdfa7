use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid token {token} for vocabulary of size {vocab}")]
    InvalidToken { token: u32, vocab: usize },
    #[error("structural error: {0}")]
    Structural(String),
    #[error("contract violation: {0}")]
    Contract(String),
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("incomplete rating pairs for prompts: {0:?}")]
    IncompletePair(Vec<String>),
    #[error("unparseable judge reply: {raw_text:?}")]
    UnparseableReply { raw_text: String },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mode collapse detected: {0}")]
    Collapse(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
