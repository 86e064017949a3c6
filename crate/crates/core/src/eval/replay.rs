use std::collections::VecDeque;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

use super::tasks::TaskInstance;
use crate::backend::{ScriptFixture, ScriptStep, ScriptedBackend};
use crate::orchestrator::{run_episode, run_zero_shot, EpisodeError, EpisodeResult, RecordedConfig};
use crate::runtime::{ExecutionResult, ToolRuntime};
use crate::trace::{read_jsonl, Clock, Phase, TraceError, TraceEvent};
use crate::transcript::CodeBlock;

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("trace is corrupt: {0}")]
    TraceCorrupt(String),
    #[error("replay diverges at t={t} ({phase})")]
    ReplayDivergence { t: usize, phase: &'static str },
    #[error("replay failed: {0}")]
    Episode(#[from] EpisodeError),
}

impl From<TraceError> for ReplayError {
    fn from(err: TraceError) -> Self {
        ReplayError::TraceCorrupt(err.to_string())
    }
}

/// Hands out recorded execution results in order.
pub struct RecordedRuntime {
    results: Mutex<VecDeque<ExecutionResult>>,
}

impl RecordedRuntime {
    pub fn new(results: impl IntoIterator<Item = ExecutionResult>) -> Self {
        Self {
            results: Mutex::new(results.into_iter().collect()),
        }
    }
}

impl ToolRuntime for RecordedRuntime {
    fn execute(&self, _code: &CodeBlock, _workdir: &Path) -> ExecutionResult {
        self.results
            .lock()
            .expect("results lock")
            .pop_front()
            .unwrap_or_else(|| ExecutionResult::failed("ReplayExhausted: no recorded result left"))
    }
}

fn corrupt(reason: impl Into<String>) -> ReplayError {
    ReplayError::TraceCorrupt(reason.into())
}

fn recorded_result(value: &Value, workdir: &Path) -> Result<ExecutionResult, ReplayError> {
    let text = |key: &str| value.get(key).and_then(Value::as_str).unwrap_or_default().to_string();
    let new_images = value
        .get("new_images")
        .and_then(Value::as_array)
        .ok_or_else(|| corrupt("observation result without new_images"))?
        .iter()
        .map(|p| {
            p.as_str()
                .map(|s| workdir.join(s))
                .ok_or_else(|| corrupt("non-string image path"))
        })
        .collect::<Result<Vec<PathBuf>, _>>()?;
    Ok(ExecutionResult {
        stdout: text("stdout"),
        stderr: text("stderr"),
        new_images,
        error: value.get("error").and_then(Value::as_str).map(String::from),
        wall_time: Duration::ZERO,
    })
}

/// Re-runs a recorded episode and checks every event against the record.
pub fn replay_events(events: &[TraceEvent], workdir: &Path) -> Result<EpisodeResult, ReplayError> {
    let first = events.first().ok_or_else(|| corrupt("empty trace"))?;
    if events.last().map(|e| e.phase) != Some(Phase::Final) {
        return Err(corrupt("trace has no final event"));
    }
    if first.phase != Phase::Prompt || first.t != 1 {
        return Err(corrupt("trace does not start with the first prompt"));
    }
    let task: TaskInstance = serde_json::from_value(first.payload.get("task").cloned().unwrap_or_default())
        .map_err(|e| corrupt(format!("bad task payload: {e}")))?;
    let zero_shot = first.payload.get("mode").and_then(Value::as_str) == Some("zero_shot");

    let mut responses = Vec::new();
    let mut results = Vec::new();
    for event in events {
        match event.phase {
            Phase::ModelOutput => responses.push(
                event.payload["text"]
                    .as_str()
                    .ok_or_else(|| corrupt("model output without text"))?
                    .to_string(),
            ),
            Phase::Observation => {
                if let Some(result) = event.payload.get("result") {
                    results.push(recorded_result(result, workdir)?);
                }
            }
            _ => {}
        }
    }
    let backend = ScriptedBackend::new(ScriptFixture::new(
        responses.into_iter().map(ScriptStep::respond).collect(),
    ));

    let result = if zero_shot {
        let mut config = crate::orchestrator::EpisodeConfig::new(workdir);
        config.verify_images = false;
        config.clock = Clock::Logical;
        config.retry_backoff = Duration::ZERO;
        run_zero_shot(&task, &backend, &config)?
    } else {
        let recorded: RecordedConfig = serde_json::from_value(first.payload.get("config").cloned().unwrap_or_default())
            .map_err(|e| corrupt(format!("bad config payload: {e}")))?;
        let mut config = recorded.into_config(workdir);
        config.verify_images = false;
        config.clock = Clock::Logical;
        config.retry_backoff = Duration::ZERO;
        run_episode(&task, &backend, &RecordedRuntime::new(results), &config)?
    };

    let length = events.len().max(result.trace.len());
    for i in 0..length {
        match (events.get(i), result.trace.get(i)) {
            (Some(a), Some(b)) if a.same_content(b) => {}
            (Some(e), _) | (None, Some(e)) => {
                return Err(ReplayError::ReplayDivergence {
                    t: e.t,
                    phase: e.phase.as_str(),
                })
            }
            (None, None) => unreachable!("index below the longer length"),
        }
    }
    Ok(result)
}

pub fn replay_file(path: &Path, workdir: &Path) -> Result<EpisodeResult, ReplayError> {
    let file = std::fs::File::open(path).map_err(|e| corrupt(format!("{}: {e}", path.display())))?;
    let events = read_jsonl(BufReader::new(file))?;
    replay_events(&events, workdir)
}
