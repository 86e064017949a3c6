//! Benchmark loading, scoring and replay.

mod bench;
mod replay;
mod report;
mod scoring;
mod tasks;

pub use bench::{run_benchmark, sanitize_id, BenchConfig, BenchMode, BenchmarkOutcome, ComponentFactory, Components};
pub use replay::{replay_events, replay_file, RecordedRuntime, ReplayError};
pub use report::{BenchmarkReport, ErrorCategory, PredictionRecord, RecordStatus, SubtaskScore};
pub use scoring::{match_option, normalize_answer};
pub use tasks::{
    load_tasks, option_letter, parse_option_label, parse_tasks, split_inline_options, ItemDiagnostic, LoadError,
    TaskFormat, TaskInstance,
};
