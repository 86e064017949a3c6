use std::time::Duration;

use base64::Engine as _;
use serde_json::{json, Value};

use super::{validate, BackendError, CompletionParams, ContentPart, Message, VisionLanguageModel};
use crate::images::mime_type;

/// Delays between attempts; the number of delays is the number of retries.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RetryPolicy {
    pub delays: Vec<Duration>,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            delays: vec![Duration::from_secs(1), Duration::from_secs(4)],
        }
    }
}

impl RetryPolicy {
    pub fn none() -> Self {
        Self { delays: Vec::new() }
    }
}

/// Client for an OpenAI-compatible `/chat/completions` endpoint.
///
/// Images are inlined as base64 data URLs. The request body is serialized
/// once per `complete` call, so retries send identical bytes.
#[derive(Debug, Clone)]
pub struct OpenAiCompatibleBackend {
    base_url: String,
    api_key: Option<String>,
    retry: RetryPolicy,
    agent: ureq::Agent,
}

impl OpenAiCompatibleBackend {
    pub fn new(base_url: impl Into<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(Duration::from_secs(300)))
            .build()
            .into();
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            retry: RetryPolicy::default(),
            agent,
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/chat/completions", self.base_url)
    }

    /// Builds the JSON request body.
    pub fn request_body(messages: &[Message], params: &CompletionParams) -> Result<Value, BackendError> {
        let mut wire_messages = Vec::with_capacity(messages.len());
        for message in messages {
            let mut content = Vec::with_capacity(message.parts.len());
            for part in &message.parts {
                content.push(match part {
                    ContentPart::Text { text } => json!({"type": "text", "text": text}),
                    ContentPart::Image { image } => {
                        let bytes = std::fs::read(&image.path).map_err(|e| BackendError::UnreadableImage {
                            path: image.path.display().to_string(),
                            reason: e.to_string(),
                        })?;
                        let url = format!(
                            "data:{};base64,{}",
                            mime_type(&image.path),
                            base64::engine::general_purpose::STANDARD.encode(bytes)
                        );
                        let mut image_url = json!({"url": url});
                        if let Some(detail) = &params.image_detail {
                            image_url["detail"] = json!(detail);
                        }
                        json!({"type": "image_url", "image_url": image_url})
                    }
                });
            }
            wire_messages.push(json!({"role": message.role.as_str(), "content": content}));
        }
        Ok(json!({
            "model": params.model_id,
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
            "messages": wire_messages,
        }))
    }

    fn attempt(&self, body: &[u8]) -> Result<String, BackendError> {
        let mut request = self
            .agent
            .post(self.endpoint())
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            request = request.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = request.send(body).map_err(|e| BackendError::Transport(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| BackendError::Transport(e.to_string()))?;
        match status {
            200..=299 => extract_content(&text),
            500..=599 => Err(BackendError::Transport(format!("HTTP {status}: {text}"))),
            _ => Err(BackendError::Rejected(format!("HTTP {status}: {text}"))),
        }
    }
}

fn extract_content(body: &str) -> Result<String, BackendError> {
    let value: Value = serde_json::from_str(body).map_err(|e| BackendError::BadResponse(e.to_string()))?;
    let content = &value["choices"][0]["message"]["content"];
    match content {
        Value::String(s) => Ok(s.clone()),
        // Some servers return content as a list of text parts.
        Value::Array(parts) => Ok(parts
            .iter()
            .filter_map(|p| p["text"].as_str())
            .collect::<Vec<_>>()
            .join("")),
        _ => Err(BackendError::BadResponse("missing choices[0].message.content".into())),
    }
}

impl VisionLanguageModel for OpenAiCompatibleBackend {
    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<String, BackendError> {
        validate(messages, params)?;
        let body = serde_json::to_vec(&Self::request_body(messages, params)?)
            .map_err(|e| BackendError::InvalidRequest(e.to_string()))?;
        let mut delays = self.retry.delays.iter();
        loop {
            match self.attempt(&body) {
                Err(err) if err.is_retryable() => match delays.next() {
                    Some(delay) => {
                        tracing::warn!(error = %err, ?delay, "retrying chat completion");
                        std::thread::sleep(*delay);
                    }
                    None => return Err(err),
                },
                other => return other,
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn content_extraction() {
        let body = r#"{"choices":[{"message":{"role":"assistant","content":"Final Answer: (A)"}}]}"#;
        assert_eq!(extract_content(body).unwrap(), "Final Answer: (A)");
        let parts = r#"{"choices":[{"message":{"content":[{"type":"text","text":"a"},{"type":"text","text":"b"}]}}]}"#;
        assert_eq!(extract_content(parts).unwrap(), "ab");
        assert!(matches!(extract_content("{}"), Err(BackendError::BadResponse(_))));
    }

    #[test]
    fn unreadable_image_is_reported() {
        let messages = vec![Message::user(vec![ContentPart::image(
            crate::images::ImageRef::task_input("img-0", "/nonexistent/x.png"),
        )])];
        let err = OpenAiCompatibleBackend::request_body(&messages, &CompletionParams::default()).unwrap_err();
        assert!(matches!(err, BackendError::UnreadableImage { .. }));
    }
}
