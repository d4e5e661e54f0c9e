//! Chat-completion backends.
//!
//! Every backend answers a [`ChatRequest`] (the full message history plus
//! generation parameters) with the assistant's text. Three implementations:
//!
//! - [`HttpBackend`]: a chat-completion JSON client for hosted models,
//! - [`ScriptedBackend`]: a deterministic rule table for offline replay,
//! - [`CachedBackend`]: a content-addressed on-disk cache wrapping either.

use std::fmt;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

mod cache;
mod http;
mod scripted;

pub use cache::{cache_key, CacheEntry, CacheStats, CachedBackend, ResponseCache};
pub use http::{HttpBackend, HttpConfig, RetryPolicy, API_KEY_ENV};
pub use scripted::{MatchKind, ScriptedBackend, ScriptedRule};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One message of a conversation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Turn {
    pub role: Role,
    pub content: String,
}

impl Turn {
    pub fn system(content: impl Into<String>) -> Self {
        Turn {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Turn {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Turn {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

pub const DEFAULT_MODEL: &str = "gpt-3.5-turbo";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub max_output_tokens: Option<u32>,
}

impl Default for GenerationParams {
    fn default() -> Self {
        GenerationParams {
            model: DEFAULT_MODEL.to_string(),
            temperature: 0.0,
            max_output_tokens: None,
        }
    }
}

/// A validated request: non-empty history ending in a user message.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    params: GenerationParams,
    messages: Vec<Turn>,
}

impl ChatRequest {
    pub fn new(params: GenerationParams, messages: Vec<Turn>) -> Result<Self, BackendError> {
        match messages.last() {
            Some(t) if t.role == Role::User => {}
            Some(t) => {
                return Err(BackendError::InvalidRequest(format!(
                    "last message must be from the user, found {}",
                    t.role
                )))
            }
            None => return Err(BackendError::InvalidRequest("no messages".into())),
        }
        if !(params.temperature >= 0.0 && params.temperature.is_finite()) {
            return Err(BackendError::InvalidRequest(format!(
                "temperature must be finite and >= 0, got {}",
                params.temperature
            )));
        }
        if params.max_output_tokens == Some(0) {
            return Err(BackendError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(ChatRequest { params, messages })
    }

    pub fn params(&self) -> &GenerationParams {
        &self.params
    }

    pub fn messages(&self) -> &[Turn] {
        &self.messages
    }

    pub fn last_user_message(&self) -> &str {
        &self.messages.last().expect("validated non-empty").content
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("rate limited after {attempts} attempt(s)")]
    RateLimited { attempts: u32 },
    #[error("authentication rejected (HTTP {status})")]
    Unauthorized { status: u16 },
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("no scripted rule matches prompt {prompt:?}")]
    NoRule { prompt: String },
    #[error("cache: {0}")]
    Cache(String),
}

/// A chat-completion model. Implementations must be safe to call from
/// several worker threads at once.
pub trait ChatBackend: Send + Sync {
    /// Returns the assistant reply with surrounding whitespace stripped.
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for Arc<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        (**self).complete(request)
    }
}

/// Pass-through wrapper counting calls that reach the wrapped backend.
#[derive(Debug, Default)]
pub struct Counting<B> {
    inner: B,
    calls: AtomicUsize,
}

impl<B> Counting<B> {
    pub fn new(inner: B) -> Self {
        Counting {
            inner,
            calls: Default::default(),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn inner(&self) -> &B {
        &self.inner
    }
}

impl<B: ChatBackend> ChatBackend for Counting<B> {
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn request_must_end_with_user() {
        let p = GenerationParams::default();
        assert!(ChatRequest::new(p.clone(), vec![]).is_err());
        assert!(ChatRequest::new(p.clone(), vec![Turn::user("a"), Turn::assistant("b")]).is_err());
        let r = ChatRequest::new(p, vec![Turn::system("s"), Turn::user("hi")]).unwrap();
        assert_eq!(r.last_user_message(), "hi");
    }

    #[test]
    fn default_temperature_is_zero() {
        assert_eq!(GenerationParams::default().temperature, 0.0);
    }

    #[test]
    fn rejects_bad_params() {
        let mut p = GenerationParams::default();
        p.temperature = -0.5;
        assert!(ChatRequest::new(p, vec![Turn::user("x")]).is_err());
        let p = GenerationParams {
            max_output_tokens: Some(0),
            ..Default::default()
        };
        assert!(ChatRequest::new(p, vec![Turn::user("x")]).is_err());
    }
}
