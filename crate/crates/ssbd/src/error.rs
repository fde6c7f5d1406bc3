//! Error type shared across the engine.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid token id {id} for vocab of size {vocab_size}")]
    InvalidToken { id: u32, vocab_size: usize },

    #[error("malformed logits: {0}")]
    MalformedLogits(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// Internal invariant violation; signals a decoder bug, not bad input.
    #[error("logic error: {0}")]
    Logic(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("transport error: {0}")]
    Transport(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("session {session} update {t}: {source}")]
    InSession {
        session: String,
        t: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    /// Annotate an error with the session/update it occurred in.
    pub fn in_session(self, session: &str, t: u64) -> Error {
        Error::InSession {
            session: session.to_string(),
            t,
            source: Box::new(self),
        }
    }
}
