//! Episode traces: one JSON object per line.

use std::io::{BufRead, Write};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Prompt,
    ModelOutput,
    Dispatch,
    Observation,
    Artifact,
    Final,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Prompt => "prompt",
            Phase::ModelOutput => "model_output",
            Phase::Dispatch => "dispatch",
            Phase::Observation => "observation",
            Phase::Artifact => "artifact",
            Phase::Final => "final",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub episode_id: String,
    /// 1-based iteration the event belongs to.
    pub t: usize,
    pub phase: Phase,
    pub payload: Value,
    pub timestamp: f64,
}

impl TraceEvent {
    /// Equality ignoring the timestamp.
    pub fn same_content(&self, other: &TraceEvent) -> bool {
        self.episode_id == other.episode_id
            && self.t == other.t
            && self.phase == other.phase
            && self.payload == other.payload
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Clock {
    /// Seconds since the Unix epoch.
    #[default]
    Wall,
    /// The event's index in the trace, so traces are reproducible byte for byte.
    Logical,
}

impl Clock {
    fn stamp(self, index: usize) -> f64 {
        match self {
            Clock::Wall => SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs_f64())
                .unwrap_or(0.0),
            Clock::Logical => index as f64,
        }
    }
}

/// Accumulates events for one episode.
#[derive(Debug, Clone)]
pub struct TraceRecorder {
    episode_id: String,
    clock: Clock,
    events: Vec<TraceEvent>,
}

impl TraceRecorder {
    pub fn new(episode_id: impl Into<String>, clock: Clock) -> Self {
        Self {
            episode_id: episode_id.into(),
            clock,
            events: Vec::new(),
        }
    }

    pub fn record(&mut self, t: usize, phase: Phase, payload: Value) {
        let timestamp = self.clock.stamp(self.events.len());
        self.events.push(TraceEvent {
            episode_id: self.episode_id.clone(),
            t,
            phase,
            payload,
            timestamp,
        });
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn into_events(self) -> Vec<TraceEvent> {
        self.events
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace is corrupt at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub fn write_jsonl(events: &[TraceEvent], mut out: impl Write) -> std::io::Result<()> {
    for event in events {
        serde_json::to_writer(&mut out, event)?;
        out.write_all(b"\n")?;
    }
    out.flush()
}

pub fn to_jsonl(events: &[TraceEvent]) -> String {
    let mut buf = Vec::new();
    write_jsonl(events, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("serde_json writes UTF-8")
}

/// Reads a trace; blank lines are skipped, anything else must be an event.
pub fn read_jsonl(input: impl BufRead) -> Result<Vec<TraceEvent>, TraceError> {
    let mut events = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let event = serde_json::from_str(&line).map_err(|e| TraceError::Corrupt {
            line: i + 1,
            reason: e.to_string(),
        })?;
        events.push(event);
    }
    Ok(events)
}
