use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::orchestrator::EpisodeStatus;

/// Failure categories for manual error analysis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCategory {
    SmallObjectParts,
    CloseVisualPrompts,
    FineGrainedSpatialReasoning,
    RelativeObjectPositions,
    ObjectOrientation,
    Miscellaneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordStatus {
    Answered,
    MaxIterations,
    BackendFailure,
    /// The task never reached the model: bad images, missing fixture, and so on.
    TaskError,
}

impl From<EpisodeStatus> for RecordStatus {
    fn from(status: EpisodeStatus) -> Self {
        match status {
            EpisodeStatus::Answered => RecordStatus::Answered,
            EpisodeStatus::MaxIterations | EpisodeStatus::Running => RecordStatus::MaxIterations,
            EpisodeStatus::BackendFailure => RecordStatus::BackendFailure,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub task_id: String,
    pub subtask: String,
    pub answer_text: String,
    pub matched: Option<usize>,
    pub gold: usize,
    pub correct: bool,
    pub status: RecordStatus,
    #[serde(default)]
    pub trace_path: Option<String>,
    #[serde(default)]
    pub error_category: Option<ErrorCategory>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SubtaskScore {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub per_subtask: BTreeMap<String, SubtaskScore>,
    /// Instance-weighted accuracy over all tasks.
    pub aggregate: f64,
    pub correct: usize,
    pub total: usize,
}

fn ratio(correct: usize, total: usize) -> f64 {
    if total == 0 {
        0.0
    } else {
        correct as f64 / total as f64
    }
}

impl BenchmarkReport {
    pub fn from_records(records: &[PredictionRecord]) -> Self {
        let mut report = BenchmarkReport::default();
        for record in records {
            let score = report.per_subtask.entry(record.subtask.clone()).or_default();
            score.total += 1;
            report.total += 1;
            if record.correct {
                score.correct += 1;
                report.correct += 1;
            }
        }
        for score in report.per_subtask.values_mut() {
            score.accuracy = ratio(score.correct, score.total);
        }
        report.aggregate = ratio(report.correct, report.total);
        report
    }
}
