//! Multimodal chat-completion backends.
//!
//! [`VisionLanguageModel`] is the only thing the engine needs from a model:
//! messages in, assistant text out. [`OpenAiCompatibleBackend`] talks to a
//! live chat-completions endpoint; [`ScriptedBackend`] replays fixture
//! responses for offline tests and trace replay.

mod http;
mod scripted;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::images::ImageRef;

pub use http::{OpenAiCompatibleBackend, RetryPolicy};
pub use scripted::{FixtureFile, RecordedRequest, ScriptFixture, ScriptStep, ScriptedBackend};

pub const DEFAULT_TEMPERATURE: f64 = 0.0;
pub const DEFAULT_MAX_TOKENS: u32 = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
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

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ContentPart {
    Text { text: String },
    Image { image: ImageRef },
}

impl ContentPart {
    pub fn text(text: impl Into<String>) -> Self {
        ContentPart::Text { text: text.into() }
    }

    pub fn image(image: ImageRef) -> Self {
        ContentPart::Image { image }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<ContentPart>,
}

impl Message {
    pub fn user(parts: Vec<ContentPart>) -> Self {
        Self {
            role: Role::User,
            parts,
        }
    }

    /// All text parts joined with newlines.
    pub fn text(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                ContentPart::Text { text } => Some(text.as_str()),
                ContentPart::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn images(&self) -> impl Iterator<Item = &ImageRef> {
        self.parts.iter().filter_map(|p| match p {
            ContentPart::Image { image } => Some(image),
            ContentPart::Text { .. } => None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub temperature: f64,
    pub max_tokens: u32,
    pub model_id: String,
    /// Passed through as `image_url.detail` when set.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_detail: Option<String>,
}

impl Default for CompletionParams {
    fn default() -> Self {
        Self {
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: DEFAULT_MAX_TOKENS,
            model_id: "gpt-4o-2024-05-13".to_string(),
            image_detail: None,
        }
    }
}

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("backend rejected the request: {0}")]
    Rejected(String),
    #[error("malformed backend response: {0}")]
    BadResponse(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cannot read image {path}: {reason}")]
    UnreadableImage { path: String, reason: String },
    #[error("script fixture exhausted after {consumed} steps")]
    FixtureExhausted { consumed: usize },
    #[error("script step {step}: prompt does not contain {missing:?}")]
    FixtureExpectationFailed { step: usize, missing: String },
}

impl BackendError {
    /// Only transport-level failures are worth another attempt.
    pub fn is_retryable(&self) -> bool {
        matches!(self, BackendError::Transport(_))
    }
}

pub trait VisionLanguageModel: Send + Sync {
    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<String, BackendError>;
}

impl<T: VisionLanguageModel + ?Sized> VisionLanguageModel for std::sync::Arc<T> {
    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<String, BackendError> {
        (**self).complete(messages, params)
    }
}

fn validate(messages: &[Message], params: &CompletionParams) -> Result<(), BackendError> {
    if messages.is_empty() {
        return Err(BackendError::InvalidRequest("no messages".into()));
    }
    if messages.iter().any(|m| m.parts.is_empty()) {
        return Err(BackendError::InvalidRequest("message without parts".into()));
    }
    if params.temperature.is_nan() || params.temperature < 0.0 {
        return Err(BackendError::InvalidRequest(format!(
            "temperature must be >= 0, got {}",
            params.temperature
        )));
    }
    Ok(())
}
