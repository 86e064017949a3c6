use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{validate, BackendError, CompletionParams, Message, VisionLanguageModel};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptStep {
    #[serde(default)]
    pub expect_substring: Option<String>,
    pub response: String,
}

impl ScriptStep {
    pub fn respond(response: impl Into<String>) -> Self {
        Self {
            expect_substring: None,
            response: response.into(),
        }
    }

    pub fn expecting(expect: impl Into<String>, response: impl Into<String>) -> Self {
        Self {
            expect_substring: Some(expect.into()),
            response: response.into(),
        }
    }
}

/// Ordered responses; serialized as a bare JSON array of steps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ScriptFixture {
    pub steps: Vec<ScriptStep>,
}

impl ScriptFixture {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        Self { steps }
    }
}

/// A fixture file holds either one script or a map of task id to script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FixtureFile {
    Single(ScriptFixture),
    PerTask(BTreeMap<String, ScriptFixture>),
}

impl FixtureFile {
    pub fn load(path: &Path) -> Result<Self, std::io::Error> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(std::io::Error::other)
    }

    /// Script for one task: the per-task entry, or the single shared script.
    pub fn for_task(&self, task_id: &str) -> Option<ScriptFixture> {
        match self {
            FixtureFile::Single(script) => Some(script.clone()),
            FixtureFile::PerTask(map) => map.get(task_id).cloned(),
        }
    }
}

/// What a scripted backend saw on one call.
#[derive(Debug, Clone, PartialEq)]
pub struct RecordedRequest {
    pub messages: Vec<Message>,
    pub params: CompletionParams,
}

impl RecordedRequest {
    pub fn text(&self) -> String {
        self.messages.iter().map(Message::text).collect::<Vec<_>>().join("\n")
    }

    pub fn image_count(&self) -> usize {
        self.messages.iter().map(|m| m.images().count()).sum()
    }
}

#[derive(Debug, Default)]
struct ScriptState {
    next: usize,
    requests: Vec<RecordedRequest>,
}

/// Deterministic backend that pops fixture steps strictly in order.
#[derive(Debug)]
pub struct ScriptedBackend {
    steps: Vec<ScriptStep>,
    state: Mutex<ScriptState>,
}

impl ScriptedBackend {
    pub fn new(fixture: ScriptFixture) -> Self {
        Self {
            steps: fixture.steps,
            state: Mutex::default(),
        }
    }

    pub fn from_responses<I, S>(responses: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::new(ScriptFixture::new(
            responses.into_iter().map(ScriptStep::respond).collect(),
        ))
    }

    /// Every request received so far, including ones that failed an expectation.
    pub fn requests(&self) -> Vec<RecordedRequest> {
        self.state.lock().unwrap().requests.clone()
    }

    pub fn calls(&self) -> usize {
        self.state.lock().unwrap().requests.len()
    }

    pub fn remaining(&self) -> usize {
        self.steps.len() - self.state.lock().unwrap().next
    }
}

impl VisionLanguageModel for ScriptedBackend {
    fn complete(&self, messages: &[Message], params: &CompletionParams) -> Result<String, BackendError> {
        validate(messages, params)?;
        let mut state = self.state.lock().unwrap();
        let request = RecordedRequest {
            messages: messages.to_vec(),
            params: params.clone(),
        };
        let prompt = request.text();
        state.requests.push(request);

        let index = state.next;
        let step = self
            .steps
            .get(index)
            .ok_or(BackendError::FixtureExhausted { consumed: index })?;
        state.next += 1;
        if let Some(expected) = &step.expect_substring {
            if !prompt.contains(expected.as_str()) {
                return Err(BackendError::FixtureExpectationFailed {
                    step: index,
                    missing: expected.clone(),
                });
            }
        }
        Ok(step.response.clone())
    }
}
