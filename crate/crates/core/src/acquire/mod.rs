//! From multimodal model replies to pair nodes.
//!
//! [`PromptTemplate`] renders the open and closed prompts, [`parse_reply`]
//! filters a reply to lexicon verbs, [`build_nodes`] adds the gold verb, and
//! [`ChatClient`] queries a chat-completion endpoint through a
//! content-addressed [`ReplyCache`].

mod cache;
mod client;
mod parse;
mod prompt;

use thiserror::Error;

pub use cache::{CacheKey, ReplyCache, ReplyCacheEntry};
pub use client::{
    ChatClient, EndpointConfig, FetchJob, HttpTransport, ImageInput, RetryPolicy, Transport, TransportResponse,
};
pub use parse::{build_nodes, parse_reply};
pub use prompt::{PromptKind, PromptTemplate};

#[derive(Debug, Error)]
pub enum AcquireError {
    #[error("gold verb {0:?} is not in the lexicon")]
    GoldOutsideLexicon(String),
    #[error("authentication rejected by the endpoint (HTTP {status}): {body}")]
    Auth { status: u16, body: String },
    #[error("gave up after {attempts} attempts; last failure: {last}")]
    RateLimitExhausted { attempts: usize, last: String },
    #[error("endpoint returned HTTP {status}: {body}")]
    Http { status: u16, body: String },
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("unexpected reply shape: {0}")]
    BadReply(String),
    #[error("credential variable {0} is not set")]
    MissingCredential(String),
    #[error("reply cache {path}: {message}")]
    Cache { path: std::path::PathBuf, message: String },
}

impl AcquireError {
    /// Whether retrying the same request may succeed.
    pub fn is_retryable(&self) -> bool {
        matches!(self, AcquireError::Transport(_))
            || matches!(self, AcquireError::Http { status, .. } if retryable_status(*status))
    }
}

pub(crate) fn retryable_status(status: u16) -> bool {
    matches!(status, 408 | 429) || (500..600).contains(&status)
}
