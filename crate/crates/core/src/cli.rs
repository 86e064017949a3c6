//! Command-line interface: `run`, `bench` and `replay`.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::ablation::AblationFlags;
use crate::agents::{AgentHandler, BackendAgents};
use crate::backend::{
    CompletionParams, FixtureFile, OpenAiCompatibleBackend, RetryPolicy, ScriptedBackend, VisionLanguageModel,
};
use crate::eval::{
    load_tasks, replay_file, run_benchmark, sanitize_id, BenchConfig, BenchMode, Components, ReplayError, TaskFormat,
    TaskInstance,
};
use crate::orchestrator::{run_episode, run_zero_shot, EpisodeConfig, EpisodeStatus};
use crate::runtime::{Dispatcher, ExecutionMode, ExecutorClient, ToolRuntime};
use crate::tools::ToolRegistry;
use crate::trace::{write_jsonl, Clock};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_ITERATIONS: i32 = 2;
pub const EXIT_BACKEND_FAILURE: i32 = 3;
pub const EXIT_TRACE_CORRUPT: i32 = 4;
pub const EXIT_DIVERGENCE: i32 = 5;

#[derive(Debug, Parser)]
#[command(
    name = "visagent",
    version,
    about = "Tool-using agent for multiple-choice visual questions"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run one episode and print its answer.
    Run(RunArgs),
    /// Evaluate a task file and write a report.
    Bench(BenchArgs),
    /// Re-run a recorded trace and check it reproduces.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExecutorModeArg {
    Static,
    Delegated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Blink,
    Mmvp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Agent,
    ZeroShot,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Ablation {
    MultiAgent,
    VisualInput,
    SpecAgents,
    VisionExperts,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Base URL of an OpenAI-compatible API, e.g. https://api.openai.com/v1.
    #[arg(long, env = "VISAGENT_BACKEND_URL")]
    pub backend_url: Option<String>,
    #[arg(long, env = "VISAGENT_API_KEY", hide_env_values = true)]
    pub api_key: Option<String>,
    #[arg(long, env = "VISAGENT_MODEL", default_value = "gpt-4o-2024-05-13")]
    pub model_id: String,
    /// Replay model responses from a fixture instead of calling a backend.
    #[arg(long, env = "VISAGENT_FIXTURE", value_name = "FIXTURE")]
    pub scripted: Option<PathBuf>,
    #[arg(long, env = "VISAGENT_EXECUTOR_URL")]
    pub executor_url: Option<String>,
    #[arg(long, value_enum, default_value_t = ExecutorModeArg::Static)]
    pub executor_mode: ExecutorModeArg,
    #[arg(short = 'k', long = "max-iterations", default_value_t = 10)]
    pub max_iterations: usize,
    #[arg(long, default_value_t = 0.0)]
    pub temperature: f64,
    #[arg(long, default_value_t = 2048)]
    pub max_tokens: u32,
    /// Per-dispatch executor timeout in seconds.
    #[arg(long, default_value_t = 120)]
    pub timeout_s: u64,
    /// Remove a component; repeatable.
    #[arg(long = "ablate", value_enum)]
    pub ablate: Vec<Ablation>,
    #[arg(long)]
    pub task_file: PathBuf,
    #[arg(long, value_enum, default_value_t = FormatArg::Blink)]
    pub format: FormatArg,
    /// Directory task image paths are relative to; defaults to the task file's directory.
    #[arg(long)]
    pub image_root: Option<PathBuf>,
    #[arg(long, default_value = "visagent-out")]
    pub output_dir: PathBuf,
    /// Stamp trace events with their index instead of wall time.
    #[arg(long)]
    pub logical_clock: bool,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Task to run when the file holds more than one.
    #[arg(long)]
    pub task_id: Option<String>,
    #[arg(long, value_enum, default_value_t = ModeArg::Agent)]
    pub mode: ModeArg,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long, value_enum, default_value_t = ModeArg::Agent)]
    pub mode: ModeArg,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    pub trace: PathBuf,
    /// Scratch directory for the replayed episode.
    #[arg(long)]
    pub workdir: Option<PathBuf>,
}

/// Configuration problems; reported with exit code 1.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct ConfigError(String);

fn config_err(message: impl Into<String>) -> ConfigError {
    ConfigError(message.into())
}

enum ModelSource {
    Scripted(FixtureFile),
    Http(OpenAiCompatibleBackend),
}

struct Setup {
    tasks: Vec<TaskInstance>,
    source: ModelSource,
    episode: EpisodeConfig,
    executor: Option<(ExecutorClient, ExecutionMode)>,
    timeout: Duration,
}

impl CommonArgs {
    fn ablation(&self) -> AblationFlags {
        let mut flags = AblationFlags::none();
        for a in &self.ablate {
            match a {
                Ablation::MultiAgent => flags.no_multi_agent = true,
                Ablation::VisualInput => flags.no_visual_input = true,
                Ablation::SpecAgents => flags.no_specialized_agents = true,
                Ablation::VisionExperts => flags.no_vision_experts = true,
            }
        }
        flags
    }

    fn setup(&self) -> Result<Setup, ConfigError> {
        if self.max_iterations == 0 {
            return Err(config_err("--max-iterations must be at least 1"));
        }
        if self.temperature < 0.0 {
            return Err(config_err("--temperature must not be negative"));
        }
        let source = match (&self.scripted, &self.backend_url) {
            (Some(path), _) => ModelSource::Scripted(
                FixtureFile::load(path)
                    .map_err(|e| config_err(format!("cannot load fixture {}: {e}", path.display())))?,
            ),
            (None, Some(url)) => ModelSource::Http(
                OpenAiCompatibleBackend::new(url.clone())
                    .with_api_key(self.api_key.clone())
                    .with_retry(RetryPolicy::none()),
            ),
            (None, None) => return Err(config_err("either --scripted or --backend-url is required")),
        };
        let executor = match (self.executor_mode, &self.executor_url) {
            (ExecutorModeArg::Delegated, None) => {
                return Err(config_err("--executor-mode delegated requires --executor-url"))
            }
            (ExecutorModeArg::Delegated, Some(url)) => {
                Some((ExecutorClient::new(url.clone()), ExecutionMode::Delegated))
            }
            (ExecutorModeArg::Static, Some(url)) => {
                Some((ExecutorClient::new(url.clone()), ExecutionMode::StaticInterpret))
            }
            (ExecutorModeArg::Static, None) => None,
        };
        let format = match self.format {
            FormatArg::Blink => TaskFormat::BlinkJson,
            FormatArg::Mmvp => TaskFormat::MmvpJson,
        };
        let image_root = self
            .image_root
            .clone()
            .unwrap_or_else(|| self.task_file.parent().map(Path::to_path_buf).unwrap_or_default());
        let tasks = load_tasks(&self.task_file, format, &image_root).map_err(|e| config_err(e.to_string()))?;
        let mut episode = EpisodeConfig::new(self.output_dir.join("work"));
        episode.max_iterations = self.max_iterations;
        episode.params = CompletionParams {
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            model_id: self.model_id.clone(),
            image_detail: None,
        };
        episode.ablation = self.ablation();
        if self.logical_clock {
            episode.clock = Clock::Logical;
        }
        Ok(Setup {
            tasks,
            source,
            episode,
            executor,
            timeout: Duration::from_secs(self.timeout_s),
        })
    }
}

impl Setup {
    fn components(&self, task: &TaskInstance) -> Result<Components, String> {
        let backend: Arc<dyn VisionLanguageModel> = match &self.source {
            ModelSource::Scripted(fixture) => Arc::new(ScriptedBackend::new(
                fixture
                    .for_task(&task.id)
                    .ok_or_else(|| format!("fixture has no script for task {:?}", task.id))?,
            )),
            ModelSource::Http(backend) => Arc::new(backend.clone()),
        };
        let agents: Arc<dyn AgentHandler> =
            Arc::new(BackendAgents::new(Arc::clone(&backend), self.episode.params.clone()));
        let registry = ToolRegistry::for_ablation(&self.episode.ablation);
        let runtime: Arc<dyn ToolRuntime> = match &self.executor {
            None => Arc::new(Dispatcher::static_only(registry, Some(agents)).with_timeout(self.timeout)),
            Some((client, mode)) => Arc::new(
                Dispatcher::with_executor(registry, *mode, client.clone(), Some(agents))
                    .map_err(|e| format!("cannot start callback server: {e}"))?
                    .with_timeout(self.timeout),
            ),
        };
        Ok(Components { backend, runtime })
    }
}

fn bench_mode(mode: ModeArg) -> BenchMode {
    match mode {
        ModeArg::Agent => BenchMode::Agent,
        ModeArg::ZeroShot => BenchMode::ZeroShot,
    }
}

fn write_file(path: &Path, contents: &[u8]) -> std::io::Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)?;
    }
    std::fs::write(path, contents)
}

pub fn cmd_run(args: &RunArgs) -> i32 {
    let setup = match args.common.setup() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let task = match (&args.task_id, setup.tasks.as_slice()) {
        (Some(id), tasks) => match tasks.iter().find(|t| &t.id == id) {
            Some(t) => t,
            None => return fail(EXIT_CONFIG, format!("no task with id {id:?}")),
        },
        (None, [only]) => only,
        (None, tasks) => {
            return fail(
                EXIT_CONFIG,
                format!("task file holds {} tasks; pick one with --task-id", tasks.len()),
            )
        }
    };
    let components = match setup.components(task) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let config = EpisodeConfig {
        workdir: setup.episode.workdir.join(sanitize_id(&task.id)),
        ..setup.episode.clone()
    };
    let outcome = match args.mode {
        ModeArg::Agent => run_episode(task, components.backend.as_ref(), components.runtime.as_ref(), &config),
        ModeArg::ZeroShot => run_zero_shot(task, components.backend.as_ref(), &config),
    };
    let result = match outcome {
        Ok(r) => r,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let trace_path = args
        .common
        .output_dir
        .join("traces")
        .join(format!("{}.jsonl", sanitize_id(&task.id)));
    let mut buf = Vec::new();
    write_jsonl(&result.trace, &mut buf).expect("writing to memory");
    if let Err(e) = write_file(&trace_path, &buf) {
        eprintln!("warning: cannot write trace {}: {e}", trace_path.display());
    }
    println!("ANSWER: {}", result.answer_text);
    println!("STATUS: {}", result.status.as_str());
    println!("TRACE: {}", trace_path.display());
    if let Some(failure) = &result.failure {
        eprintln!("backend failure: {failure}");
    }
    match result.status {
        EpisodeStatus::Answered => EXIT_OK,
        EpisodeStatus::MaxIterations | EpisodeStatus::Running => EXIT_MAX_ITERATIONS,
        EpisodeStatus::BackendFailure => EXIT_BACKEND_FAILURE,
    }
}

pub fn cmd_bench(args: &BenchArgs) -> i32 {
    let setup = match args.common.setup() {
        Ok(s) => s,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    let output_dir = &args.common.output_dir;
    let config = BenchConfig {
        episode: setup.episode.clone(),
        mode: bench_mode(args.mode),
        trace_dir: Some(output_dir.join("traces")),
        jobs: args.jobs,
    };
    let outcome = run_benchmark(&setup.tasks, &|task| setup.components(task), &config);
    let mut records = Vec::new();
    for record in &outcome.records {
        serde_json::to_writer(&mut records, record).expect("records serialize");
        records.push(b'\n');
    }
    let report = serde_json::to_vec_pretty(&outcome.report).expect("report serializes");
    let report_path = output_dir.join("report.json");
    if let Err(e) =
        write_file(&report_path, &report).and_then(|()| write_file(&output_dir.join("records.jsonl"), &records))
    {
        return fail(EXIT_CONFIG, format!("cannot write results: {e}"));
    }
    for (name, score) in &outcome.report.per_subtask {
        println!("{name}: {}/{} = {:.3}", score.correct, score.total, score.accuracy);
    }
    println!(
        "aggregate: {}/{} = {:.3}",
        outcome.report.correct, outcome.report.total, outcome.report.aggregate
    );
    println!("REPORT: {}", report_path.display());
    EXIT_OK
}

pub fn cmd_replay(args: &ReplayArgs) -> i32 {
    let workdir = args
        .workdir
        .clone()
        .unwrap_or_else(|| std::env::temp_dir().join(format!("visagent-replay-{}", std::process::id())));
    let outcome = replay_file(&args.trace, &workdir);
    if args.workdir.is_none() {
        let _ = std::fs::remove_dir_all(&workdir);
    }
    match outcome {
        Ok(result) => {
            println!("ANSWER: {}", result.answer_text);
            println!("STATUS: {}", result.status.as_str());
            println!("REPLAY: ok ({} events)", result.trace.len());
            EXIT_OK
        }
        Err(e @ ReplayError::ReplayDivergence { .. }) => fail(EXIT_DIVERGENCE, e),
        Err(e @ ReplayError::TraceCorrupt(_)) => fail(EXIT_TRACE_CORRUPT, e),
        Err(e) => fail(EXIT_TRACE_CORRUPT, e),
    }
}

fn fail(code: i32, message: impl std::fmt::Display) -> i32 {
    eprintln!("error: {message}");
    code
}

pub fn run(cli: &Cli) -> i32 {
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Replay(args) => cmd_replay(args),
    }
}
