//! Client for an out-of-process code executor speaking `POST /execute`.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Extra time allowed on top of the execution timeout for the HTTP exchange.
const TRANSPORT_GRACE: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecuteRequest {
    pub code: String,
    pub workdir: String,
    pub callback_url: Option<String>,
    pub timeout_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecuteResponse {
    #[serde(default)]
    pub stdout: String,
    #[serde(default)]
    pub stderr: String,
    #[serde(default)]
    pub new_images: Vec<String>,
    #[serde(default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ExecutorError {
    #[error("TimeoutExceeded: no response within {0:?}")]
    TimeoutExceeded(Duration),
    #[error("ExecutorUnreachable: {0}")]
    Unreachable(String),
    #[error("ExecutorUnreachable: bad response: {0}")]
    BadResponse(String),
}

#[derive(Debug, Clone)]
pub struct ExecutorClient {
    base_url: String,
    grace: Duration,
}

impl ExecutorClient {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            grace: TRANSPORT_GRACE,
        }
    }

    /// Overrides the slack added to each request's execution timeout.
    pub fn with_transport_grace(mut self, grace: Duration) -> Self {
        self.grace = grace;
        self
    }

    pub fn endpoint(&self) -> String {
        format!("{}/execute", self.base_url)
    }

    /// Posts the request, retrying once if the connection itself fails.
    pub fn execute(&self, request: &ExecuteRequest) -> Result<ExecuteResponse, ExecutorError> {
        let timeout = Duration::from_secs_f64(request.timeout_s.max(0.0)) + self.grace;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into();
        let body = serde_json::to_vec(request).map_err(|e| ExecutorError::BadResponse(e.to_string()))?;
        match self.attempt(&agent, &body, timeout) {
            Err(ExecutorError::Unreachable(reason)) => {
                tracing::warn!(%reason, "executor unreachable, retrying once");
                self.attempt(&agent, &body, timeout)
            }
            other => other,
        }
    }

    fn attempt(&self, agent: &ureq::Agent, body: &[u8], timeout: Duration) -> Result<ExecuteResponse, ExecutorError> {
        let transport = |e: ureq::Error| match e {
            ureq::Error::Timeout(_) => ExecutorError::TimeoutExceeded(timeout),
            other => ExecutorError::Unreachable(other.to_string()),
        };
        let mut response = agent
            .post(self.endpoint())
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(transport)?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(transport)?;
        if !(200..300).contains(&status) {
            return Err(ExecutorError::BadResponse(format!("HTTP {status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| ExecutorError::BadResponse(e.to_string()))
    }
}
