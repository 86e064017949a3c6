use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use super::report::{BenchmarkReport, PredictionRecord, RecordStatus};
use super::scoring::match_option;
use super::tasks::TaskInstance;
use crate::backend::VisionLanguageModel;
use crate::orchestrator::{run_episode, run_zero_shot, EpisodeConfig};
use crate::runtime::ToolRuntime;
use crate::trace::write_jsonl;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchMode {
    #[default]
    Agent,
    ZeroShot,
}

/// Backend and runtime for one task.
pub struct Components {
    pub backend: Arc<dyn VisionLanguageModel>,
    pub runtime: Arc<dyn ToolRuntime>,
}

pub type ComponentFactory<'a> = dyn Fn(&TaskInstance) -> Result<Components, String> + Sync + 'a;

#[derive(Debug, Clone)]
pub struct BenchConfig {
    /// Template for every episode; `workdir` is the parent of per-task workdirs.
    pub episode: EpisodeConfig,
    pub mode: BenchMode,
    /// Where traces go; `None` keeps them in memory only.
    pub trace_dir: Option<PathBuf>,
    pub jobs: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkOutcome {
    pub report: BenchmarkReport,
    pub records: Vec<PredictionRecord>,
}

/// File-name-safe version of a task id.
pub fn sanitize_id(id: &str) -> String {
    let cleaned: String = id
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') {
                c
            } else {
                '_'
            }
        })
        .collect();
    match cleaned.trim_matches('.') {
        "" => "task".to_string(),
        s => s.to_string(),
    }
}

fn evaluate(task: &TaskInstance, factory: &ComponentFactory<'_>, config: &BenchConfig) -> PredictionRecord {
    let mut record = PredictionRecord {
        task_id: task.id.clone(),
        subtask: task.subtask.clone(),
        answer_text: String::new(),
        matched: None,
        gold: task.gold,
        correct: false,
        status: RecordStatus::TaskError,
        trace_path: None,
        error_category: None,
        error: None,
    };
    let components = match factory(task) {
        Ok(c) => c,
        Err(e) => {
            record.error = Some(e);
            return record;
        }
    };
    let episode = EpisodeConfig {
        workdir: config.episode.workdir.join(sanitize_id(&task.id)),
        ..config.episode.clone()
    };
    let outcome = match config.mode {
        BenchMode::Agent => run_episode(task, components.backend.as_ref(), components.runtime.as_ref(), &episode),
        BenchMode::ZeroShot => run_zero_shot(task, components.backend.as_ref(), &episode),
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) => {
            record.error = Some(e.to_string());
            return record;
        }
    };
    if let Some(dir) = &config.trace_dir {
        let path = dir.join(format!("{}.jsonl", sanitize_id(&task.id)));
        match write_trace(&path, &result.trace) {
            Ok(()) => record.trace_path = Some(path.display().to_string()),
            Err(e) => tracing::warn!(task = %task.id, error = %e, "cannot write trace"),
        }
    }
    record.matched = match_option(&result.answer_text, &task.options);
    record.correct = record.matched == Some(task.gold);
    record.status = result.status.into();
    record.error = result.failure;
    record.answer_text = result.answer_text;
    record
}

fn write_trace(path: &Path, events: &[crate::trace::TraceEvent]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    write_jsonl(events, std::io::BufWriter::new(std::fs::File::create(path)?))
}

/// Evaluates every task; failures become incorrect records, never aborts.
///
/// Records come back in task order regardless of `jobs`.
pub fn run_benchmark(tasks: &[TaskInstance], factory: &ComponentFactory<'_>, config: &BenchConfig) -> BenchmarkOutcome {
    let slots: Mutex<Vec<Option<PredictionRecord>>> = Mutex::new(vec![None; tasks.len()]);
    let next = AtomicUsize::new(0);
    let workers = config.jobs.clamp(1, tasks.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(task) = tasks.get(i) else { break };
                let record = evaluate(task, factory, config);
                slots.lock().expect("slots lock")[i] = Some(record);
            });
        }
    });
    let records: Vec<PredictionRecord> = slots
        .into_inner()
        .expect("slots lock")
        .into_iter()
        .map(|r| r.expect("every task evaluated"))
        .collect();
    BenchmarkOutcome {
        report: BenchmarkReport::from_records(&records),
        records,
    }
}
