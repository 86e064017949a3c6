//! Executes orchestrator code blocks and harvests the images they produce.

mod callback;
mod executor;
mod interp;
mod stub;

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

pub use callback::{CallbackRoute, CallbackServer};
pub use executor::{ExecuteRequest, ExecuteResponse, ExecutorClient, ExecutorError};
pub use interp::{
    py_float_repr, py_str_repr, static_interpret, Literal, PrintArg, Statement, StaticCall, UnsupportedCode,
};
pub use stub::{
    clip_similarity, depth_gradient, derived_path, describe_markers, Marker, ProgramOutput, StubToolbox,
    MARKERS_SUFFIX, NO_VISUAL_PROMPTS, SAVED_IMAGE_PREFIX,
};

use crate::agents::AgentHandler;
use crate::images::contain;
use crate::tools::ToolRegistry;
use crate::transcript::CodeBlock;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(120);

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub stdout: String,
    pub stderr: String,
    /// Images written by the code, inside the workdir.
    pub new_images: Vec<PathBuf>,
    pub error: Option<String>,
    #[serde(skip)]
    pub wall_time: Duration,
}

impl ExecutionResult {
    pub fn failed(error: impl Into<String>) -> Self {
        Self {
            error: Some(error.into()),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecutionMode {
    /// Send code to an external executor.
    Delegated,
    /// Interpret the restricted subset natively against stub tools.
    StaticInterpret,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExecutionRequest {
    pub code: CodeBlock,
    pub workdir: PathBuf,
    pub callback_url: Option<String>,
    pub timeout: Duration,
    pub mode: ExecutionMode,
}

/// Anything that can run an orchestrator code block.
pub trait ToolRuntime: Send + Sync {
    fn execute(&self, code: &CodeBlock, workdir: &Path) -> ExecutionResult;
}

impl<T: ToolRuntime + ?Sized> ToolRuntime for Arc<T> {
    fn execute(&self, code: &CodeBlock, workdir: &Path) -> ExecutionResult {
        (**self).execute(code, workdir)
    }
}

/// Paths announced on `SAVED_IMAGE: ` lines, in order.
pub fn saved_image_lines(stdout: &str) -> impl Iterator<Item = &str> {
    stdout
        .lines()
        .filter_map(|line| line.strip_prefix(SAVED_IMAGE_PREFIX))
        .map(str::trim)
        .filter(|p| !p.is_empty())
}

/// Union of reported paths and `SAVED_IMAGE` lines that resolve inside `workdir`.
///
/// Escaping paths are dropped and noted on `stderr`.
pub fn harvest_images<'a>(
    workdir: &Path,
    reported: impl IntoIterator<Item = &'a str>,
    stdout: &'a str,
    stderr: &mut String,
) -> Vec<PathBuf> {
    let mut images: Vec<PathBuf> = Vec::new();
    for candidate in reported.into_iter().chain(saved_image_lines(stdout)) {
        match contain(workdir, Path::new(candidate)) {
            Some(path) => {
                if !images.contains(&path) {
                    images.push(path);
                }
            }
            None => {
                tracing::warn!(path = candidate, "dropping image outside the workdir");
                stderr.push_str(&format!("dropped image outside the working directory: {candidate}\n"));
            }
        }
    }
    images
}

/// Routes code to the static interpreter or an external executor.
pub struct Dispatcher {
    registry: ToolRegistry,
    mode: ExecutionMode,
    timeout: Duration,
    executor: Option<ExecutorClient>,
    agents: Option<Arc<dyn AgentHandler>>,
    callbacks: Option<CallbackServer>,
}

impl Dispatcher {
    /// Static interpretation only; unsupported code becomes an error result.
    pub fn static_only(registry: ToolRegistry, agents: Option<Arc<dyn AgentHandler>>) -> Self {
        Self {
            registry,
            mode: ExecutionMode::StaticInterpret,
            timeout: DEFAULT_TIMEOUT,
            executor: None,
            agents,
            callbacks: None,
        }
    }

    /// Uses `executor` for every block in `Delegated` mode, or as the
    /// fallback for unsupported code in `StaticInterpret` mode.
    pub fn with_executor(
        registry: ToolRegistry,
        mode: ExecutionMode,
        executor: ExecutorClient,
        agents: Option<Arc<dyn AgentHandler>>,
    ) -> std::io::Result<Self> {
        let callbacks = agents
            .as_ref()
            .map(|handler| CallbackServer::start(Arc::clone(handler)))
            .transpose()?;
        Ok(Self {
            registry,
            mode,
            timeout: DEFAULT_TIMEOUT,
            executor: Some(executor),
            agents,
            callbacks,
        })
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn mode(&self) -> ExecutionMode {
        self.mode
    }

    pub fn registry(&self) -> &ToolRegistry {
        &self.registry
    }

    pub fn dispatch(&self, request: &ExecutionRequest) -> ExecutionResult {
        let started = Instant::now();
        let mut result = match request.mode {
            ExecutionMode::Delegated => self.delegate(request),
            ExecutionMode::StaticInterpret => match static_interpret(&request.code, &self.registry) {
                Ok(statements) => self.interpret(&statements, &request.workdir),
                Err(unsupported) if self.executor.is_some() => {
                    tracing::debug!(%unsupported, "forwarding to executor");
                    self.delegate(request)
                }
                Err(unsupported) => ExecutionResult::failed(unsupported.to_string()),
            },
        };
        result.wall_time = started.elapsed();
        result
    }

    fn interpret(&self, statements: &[Statement], workdir: &Path) -> ExecutionResult {
        let toolbox = StubToolbox::new(workdir, &self.registry, self.agents.as_deref());
        let output = toolbox.run(statements);
        let mut stderr = String::new();
        let new_images = harvest_images(workdir, [], &output.stdout, &mut stderr);
        ExecutionResult {
            stdout: output.stdout,
            stderr,
            new_images,
            error: output.error,
            wall_time: Duration::ZERO,
        }
    }

    fn delegate(&self, request: &ExecutionRequest) -> ExecutionResult {
        let Some(executor) = &self.executor else {
            return ExecutionResult::failed("ExecutorUnreachable: no executor configured");
        };
        let route = self.callbacks.as_ref().map(|s| s.register(&request.workdir));
        let wire = ExecuteRequest {
            code: request.code.source.clone(),
            workdir: request.workdir.display().to_string(),
            callback_url: request
                .callback_url
                .clone()
                .or_else(|| route.as_ref().map(|r| r.url.clone())),
            timeout_s: request.timeout.as_secs_f64(),
        };
        match executor.execute(&wire) {
            Ok(response) => {
                let mut stderr = response.stderr;
                let new_images = harvest_images(
                    &request.workdir,
                    response.new_images.iter().map(String::as_str),
                    &response.stdout,
                    &mut stderr,
                );
                ExecutionResult {
                    stdout: response.stdout,
                    stderr,
                    new_images,
                    error: response.error,
                    wall_time: Duration::ZERO,
                }
            }
            Err(e) => ExecutionResult::failed(e.to_string()),
        }
    }
}

impl ToolRuntime for Dispatcher {
    fn execute(&self, code: &CodeBlock, workdir: &Path) -> ExecutionResult {
        self.dispatch(&ExecutionRequest {
            code: code.clone(),
            workdir: workdir.to_path_buf(),
            callback_url: None,
            timeout: self.timeout,
            mode: self.mode,
        })
    }
}
