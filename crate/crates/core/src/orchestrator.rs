//! The orchestrator loop: call the model, parse, dispatch, observe, repeat.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::ablation::AblationFlags;
use crate::backend::{BackendError, CompletionParams, ContentPart, Message, VisionLanguageModel};
use crate::eval::TaskInstance;
use crate::images::{relative_to, ImageRef};
use crate::prompt::{format_initial_prompt, render_question, PromptError, PromptOptions};
use crate::runtime::{ExecutionResult, ToolRuntime, MARKERS_SUFFIX};
use crate::tools::ToolRegistry;
use crate::trace::{Clock, Phase, TraceEvent, TraceRecorder};
use crate::transcript::{
    extract_final_answer, parse_turn, render_observation, MalformedTurn, ParsedTurn, DEFAULT_TRUNCATION_LIMIT,
};

pub const DEFAULT_MAX_ITERATIONS: usize = 10;
pub const DEFAULT_RETRY_BUDGET: usize = 2;
pub const REPROMPT_MESSAGE: &str =
    "Your last output did not follow the required format. You MUST use the labeled sections and retry.";
const OBSERVATION_PREFIX: &str = "Observation: ";
const ZERO_SHOT_INSTRUCTION: &str = "Answer with the option's letter from the given choices directly.";

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeConfig {
    pub max_iterations: usize,
    pub params: CompletionParams,
    pub truncation_limit: usize,
    pub ablation: AblationFlags,
    pub workdir: PathBuf,
    /// Transport failures tolerated per episode before giving up.
    pub retry_budget: usize,
    /// First retry delay; each later one is four times longer.
    pub retry_backoff: Duration,
    pub clock: Clock,
    /// Copy task images into the workdir and fail on unreadable ones.
    pub verify_images: bool,
}

impl EpisodeConfig {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Self {
            max_iterations: DEFAULT_MAX_ITERATIONS,
            params: CompletionParams::default(),
            truncation_limit: DEFAULT_TRUNCATION_LIMIT,
            ablation: AblationFlags::none(),
            workdir: workdir.into(),
            retry_budget: DEFAULT_RETRY_BUDGET,
            retry_backoff: Duration::from_secs(1),
            clock: Clock::Wall,
            verify_images: true,
        }
    }

    /// The part of the config that shapes the trace, as stored in it.
    pub fn recorded(&self) -> RecordedConfig {
        RecordedConfig {
            max_iterations: self.max_iterations,
            params: self.params.clone(),
            truncation_limit: self.truncation_limit,
            ablation: self.ablation,
            retry_budget: self.retry_budget,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedConfig {
    pub max_iterations: usize,
    pub params: CompletionParams,
    pub truncation_limit: usize,
    pub ablation: AblationFlags,
    pub retry_budget: usize,
}

impl RecordedConfig {
    pub fn into_config(self, workdir: impl Into<PathBuf>) -> EpisodeConfig {
        EpisodeConfig {
            max_iterations: self.max_iterations,
            params: self.params,
            truncation_limit: self.truncation_limit,
            ablation: self.ablation,
            retry_budget: self.retry_budget,
            ..EpisodeConfig::new(workdir)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Answered,
    MaxIterations,
    BackendFailure,
}

impl EpisodeStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            EpisodeStatus::Running => "running",
            EpisodeStatus::Answered => "answered",
            EpisodeStatus::MaxIterations => "max_iterations",
            EpisodeStatus::BackendFailure => "backend_failure",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Turn {
    Parsed(ParsedTurn),
    Malformed(MalformedTurn),
}

impl Turn {
    pub fn text(&self) -> String {
        match self {
            Turn::Parsed(turn) => turn.text(),
            Turn::Malformed(turn) => turn.raw.clone(),
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self, Turn::Parsed(turn) if turn.terminal)
    }
}

impl From<ParsedTurn> for Turn {
    fn from(turn: ParsedTurn) -> Self {
        Turn::Parsed(turn)
    }
}

impl From<MalformedTurn> for Turn {
    fn from(turn: MalformedTurn) -> Self {
        Turn::Malformed(turn)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeState {
    /// Segments joined with `\n` form the prompt text.
    pub prompt_history: Vec<String>,
    pub turns: Vec<Turn>,
    /// Visual context, in insertion order.
    pub images: Vec<ImageRef>,
    pub t: usize,
    pub status: EpisodeStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("duplicate image id {0:?}")]
pub struct DuplicateArtifactId(pub String);

impl EpisodeState {
    pub fn new(initial_prompt: impl Into<String>, images: Vec<ImageRef>) -> Self {
        Self {
            prompt_history: vec![initial_prompt.into()],
            turns: Vec::new(),
            images,
            t: 0,
            status: EpisodeStatus::Running,
        }
    }

    pub fn prompt_text(&self) -> String {
        self.prompt_history.join("\n")
    }
}

/// Appends one turn (and its observation) and merges new images.
pub fn apply_turn(
    state: &EpisodeState,
    turn: impl Into<Turn>,
    observation: Option<String>,
    artifacts: Vec<ImageRef>,
) -> Result<EpisodeState, DuplicateArtifactId> {
    let turn = turn.into();
    let mut ids: HashSet<&str> = state.images.iter().map(|i| i.id.as_str()).collect();
    for artifact in &artifacts {
        if !ids.insert(&artifact.id) {
            return Err(DuplicateArtifactId(artifact.id.clone()));
        }
    }
    let mut next = state.clone();
    next.prompt_history.push(turn.text());
    next.prompt_history.extend(observation);
    next.images.extend(artifacts);
    next.turns.push(turn);
    next.t += 1;
    Ok(next)
}

/// Last option mentioned in the newest turn that mentions any.
///
/// Looks for `(A)`-style letters and for option texts of two or more
/// characters at word boundaries. Returns `""` when nothing matches.
pub fn fallback_answer(state: &EpisodeState, options: &[String]) -> String {
    for turn in state.turns.iter().rev() {
        let text = turn.text();
        let mut best: Option<(usize, usize)> = None;
        let mut consider = |position: usize, index: usize| {
            if best.is_none_or(|(p, _)| position >= p) {
                best = Some((position, index));
            }
        };
        for (index, option) in options.iter().enumerate().take(26) {
            for (pos, _) in text.match_indices(&TaskInstance::option_label(index)) {
                consider(pos, index);
            }
            let option = option.trim();
            if option.chars().count() >= 2 {
                for (pos, _) in text.match_indices(option) {
                    if at_word_boundary(&text, pos, option.len()) {
                        consider(pos, index);
                    }
                }
            }
        }
        if let Some((_, index)) = best {
            return TaskInstance::option_label(index);
        }
    }
    String::new()
}

fn at_word_boundary(text: &str, start: usize, len: usize) -> bool {
    let before = text[..start].chars().next_back();
    let after = text[start + len..].chars().next();
    !before.is_some_and(char::is_alphanumeric) && !after.is_some_and(char::is_alphanumeric)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeResult {
    pub episode_id: String,
    /// Final answer, the fallback answer, or empty.
    pub answer_text: String,
    pub status: EpisodeStatus,
    pub state: EpisodeState,
    pub backend_calls: usize,
    pub failure: Option<String>,
    pub trace: Vec<TraceEvent>,
}

impl EpisodeResult {
    pub fn t(&self) -> usize {
        self.state.t
    }

    pub fn images(&self) -> &[ImageRef] {
        &self.state.images
    }
}

#[derive(Debug, Error)]
pub enum EpisodeError {
    #[error("template placeholder {{{0}}} has no value or is missing")]
    MissingPlaceholder(String),
    #[error("task image {0} is not readable")]
    MissingImage(String),
    #[error("cannot prepare working directory {path}: {reason}")]
    Workdir { path: PathBuf, reason: String },
    #[error(transparent)]
    DuplicateArtifactId(#[from] DuplicateArtifactId),
}

impl From<PromptError> for EpisodeError {
    fn from(err: PromptError) -> Self {
        match err {
            PromptError::MissingPlaceholder(name) => EpisodeError::MissingPlaceholder(name),
            PromptError::MissingImage(path) => EpisodeError::MissingImage(path),
        }
    }
}

/// Copies task images (and their marker files) into the workdir under
/// their base names.
///
/// Name clashes get an `{index}_` prefix. Without `copy`, only the staged
/// paths are computed.
pub fn stage_images(task: &TaskInstance, workdir: &Path, copy: bool) -> Result<TaskInstance, EpisodeError> {
    let mut used = HashSet::new();
    let mut staged = task.clone();
    for (i, image) in staged.images.iter_mut().enumerate() {
        let base = image
            .path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| format!("image-{i}"));
        let name = if used.insert(base.clone()) {
            base
        } else {
            format!("{i}_{base}")
        };
        used.insert(name.clone());
        let target = workdir.join(&name);
        if copy && image.path != target {
            std::fs::copy(&image.path, &target)
                .map_err(|_| EpisodeError::MissingImage(image.path.display().to_string()))?;
            let markers = sibling(&image.path, MARKERS_SUFFIX);
            if markers.is_file() {
                std::fs::copy(&markers, sibling(&target, MARKERS_SUFFIX)).map_err(|e| EpisodeError::Workdir {
                    path: workdir.to_path_buf(),
                    reason: e.to_string(),
                })?;
            }
        }
        image.path = target;
    }
    Ok(staged)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

fn image_payload(images: &[ImageRef], workdir: &Path) -> Value {
    Value::Array(
        images
            .iter()
            .map(|img| json!({"id": img.id, "path": relative_to(workdir, &img.path)}))
            .collect(),
    )
}

/// Serialized execution result with workdir-relative image paths.
pub fn result_payload(result: &ExecutionResult, workdir: &Path) -> Value {
    json!({
        "stdout": result.stdout,
        "stderr": result.stderr,
        "new_images": result.new_images.iter().map(|p| relative_to(workdir, p)).collect::<Vec<_>>(),
        "error": result.error,
    })
}

struct Caller<'a> {
    backend: &'a dyn VisionLanguageModel,
    config: &'a EpisodeConfig,
    calls: usize,
    retries: usize,
}

impl Caller<'_> {
    fn call(&mut self, message: &Message) -> Result<String, BackendError> {
        loop {
            self.calls += 1;
            match self
                .backend
                .complete(std::slice::from_ref(message), &self.config.params)
            {
                Err(err) if err.is_retryable() && self.retries < self.config.retry_budget => {
                    let delay = self.config.retry_backoff * 4u32.pow(self.retries as u32);
                    self.retries += 1;
                    tracing::warn!(error = %err, ?delay, "backend call failed, retrying");
                    std::thread::sleep(delay);
                }
                other => return other,
            }
        }
    }
}

fn finish(
    mut state: EpisodeState,
    status: EpisodeStatus,
    answer_text: String,
    failure: Option<String>,
    mut recorder: TraceRecorder,
    calls: usize,
    episode_id: &str,
) -> EpisodeResult {
    state.status = status;
    recorder.record(
        state.t.max(1),
        Phase::Final,
        json!({
            "status": status.as_str(),
            "answer": answer_text,
            "t": state.t,
            "images": state.images.len(),
            "failure": failure,
        }),
    );
    EpisodeResult {
        episode_id: episode_id.to_string(),
        answer_text,
        status,
        state,
        backend_calls: calls,
        failure,
        trace: recorder.into_events(),
    }
}

/// Runs one episode to an answer, the iteration limit, or a backend failure.
pub fn run_episode(
    task: &TaskInstance,
    backend: &dyn VisionLanguageModel,
    runtime: &dyn ToolRuntime,
    config: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    let workdir = config.workdir.as_path();
    std::fs::create_dir_all(workdir).map_err(|e| EpisodeError::Workdir {
        path: workdir.to_path_buf(),
        reason: e.to_string(),
    })?;
    let staged = stage_images(task, workdir, config.verify_images)?;
    let registry = ToolRegistry::for_ablation(&config.ablation);
    let text_only = config.ablation.no_visual_input;
    let prompt = format_initial_prompt(
        &staged,
        &registry,
        PromptOptions {
            workdir,
            inline_agents: config.ablation.no_multi_agent,
            text_only,
            verify_images: config.verify_images,
        },
    )?;

    let mut recorder = TraceRecorder::new(&task.id, config.clock);
    let mut state = EpisodeState::new(prompt.text, staged.images.clone());
    let mut caller = Caller {
        backend,
        config,
        calls: 0,
        retries: 0,
    };

    while state.t < config.max_iterations {
        let t = state.t + 1;
        let attached: &[ImageRef] = if text_only { &[] } else { &state.images };
        let text = state.prompt_text();
        let mut payload = json!({"text": text, "images": image_payload(attached, workdir)});
        if t == 1 {
            payload["task"] = json!(task);
            payload["config"] = json!(config.recorded());
        }
        recorder.record(t, Phase::Prompt, payload);

        let mut parts = vec![ContentPart::text(text)];
        parts.extend(attached.iter().cloned().map(ContentPart::image));
        let output = match caller.call(&Message::user(parts)) {
            Ok(output) => output,
            Err(err) => {
                let answer = String::new();
                return Ok(finish(
                    state,
                    EpisodeStatus::BackendFailure,
                    answer,
                    Some(err.to_string()),
                    recorder,
                    caller.calls,
                    &task.id,
                ));
            }
        };
        recorder.record(t, Phase::ModelOutput, json!({"text": output}));

        match parse_turn(&output) {
            Ok(turn) if turn.terminal => {
                let answer = extract_final_answer(&turn);
                state = apply_turn(&state, turn, None, Vec::new())?;
                return Ok(finish(
                    state,
                    EpisodeStatus::Answered,
                    answer,
                    None,
                    recorder,
                    caller.calls,
                    &task.id,
                ));
            }
            Ok(turn) => match turn.code.clone() {
                Some(code) => {
                    recorder.record(t, Phase::Dispatch, json!({"code": code.source}));
                    let result = runtime.execute(&code, workdir);
                    let observation = render_observation(&result, config.truncation_limit);
                    recorder.record(
                        t,
                        Phase::Observation,
                        json!({"text": observation, "result": result_payload(&result, workdir)}),
                    );
                    let artifacts: Vec<ImageRef> = result
                        .new_images
                        .iter()
                        .enumerate()
                        .map(|(k, path)| ImageRef::artifact(format!("artifact-{t}-{k}"), path))
                        .collect();
                    recorder.record(
                        t,
                        Phase::Artifact,
                        json!({"images": image_payload(&artifacts, workdir)}),
                    );
                    state = apply_turn(&state, turn, Some(observation), artifacts)?;
                }
                None => state = apply_turn(&state, turn, None, Vec::new())?,
            },
            Err(malformed) => {
                let observation = format!("{OBSERVATION_PREFIX}{REPROMPT_MESSAGE}");
                recorder.record(
                    t,
                    Phase::Observation,
                    json!({"text": observation, "malformed": malformed.reason}),
                );
                state = apply_turn(&state, malformed, Some(observation), Vec::new())?;
            }
        }
    }

    let answer = fallback_answer(&state, &task.options);
    Ok(finish(
        state,
        EpisodeStatus::MaxIterations,
        answer,
        None,
        recorder,
        caller.calls,
        &task.id,
    ))
}

/// Single backend call with the question, choices and images; no tools.
pub fn run_zero_shot(
    task: &TaskInstance,
    backend: &dyn VisionLanguageModel,
    config: &EpisodeConfig,
) -> Result<EpisodeResult, EpisodeError> {
    if config.verify_images {
        if let Some(missing) = task.images.iter().find(|i| std::fs::File::open(&i.path).is_err()) {
            return Err(EpisodeError::MissingImage(missing.path.display().to_string()));
        }
    }
    let text = format!("{}\n{ZERO_SHOT_INSTRUCTION}", render_question(task));
    let attached: &[ImageRef] = if config.ablation.no_visual_input {
        &[]
    } else {
        &task.images
    };
    let mut recorder = TraceRecorder::new(&task.id, config.clock);
    recorder.record(
        1,
        Phase::Prompt,
        json!({"text": text, "images": image_payload(attached, &config.workdir), "task": task, "mode": "zero_shot"}),
    );
    let state = EpisodeState::new(text.clone(), task.images.clone());
    let mut parts = vec![ContentPart::text(text)];
    parts.extend(attached.iter().cloned().map(ContentPart::image));
    let mut caller = Caller {
        backend,
        config,
        calls: 0,
        retries: 0,
    };
    match caller.call(&Message::user(parts)) {
        Ok(output) => {
            recorder.record(1, Phase::ModelOutput, json!({"text": output}));
            let mut state = state;
            state.prompt_history.push(output.clone());
            state.t = 1;
            let answer = output.trim().to_string();
            Ok(finish(
                state,
                EpisodeStatus::Answered,
                answer,
                None,
                recorder,
                caller.calls,
                &task.id,
            ))
        }
        Err(err) => Ok(finish(
            state,
            EpisodeStatus::BackendFailure,
            String::new(),
            Some(err.to_string()),
            recorder,
            caller.calls,
            &task.id,
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::ScriptedBackend;
    use crate::transcript::CodeBlock;

    struct NoTools;

    impl ToolRuntime for NoTools {
        fn execute(&self, _: &CodeBlock, _: &Path) -> ExecutionResult {
            ExecutionResult {
                stdout: "done\n".into(),
                ..ExecutionResult::default()
            }
        }
    }

    fn task(dir: &Path) -> TaskInstance {
        let img = dir.join("src.jpg");
        std::fs::write(&img, b"jpeg").unwrap();
        TaskInstance {
            id: "task-1".into(),
            subtask: "Relative_Depth".into(),
            images: vec![ImageRef::task_input("img-0", img)],
            question: "Which point is closer?".into(),
            options: vec!["A".into(), "B".into()],
            gold: 0,
        }
    }

    fn config(dir: &Path) -> EpisodeConfig {
        EpisodeConfig {
            clock: Clock::Logical,
            retry_backoff: Duration::ZERO,
            ..EpisodeConfig::new(dir.join("work"))
        }
    }

    fn parsed(text: &str) -> Turn {
        Turn::Parsed(parse_turn(text).unwrap())
    }

    #[test]
    fn immediate_answer() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ScriptedBackend::from_responses(["Thought: easy.\nFinal Answer: (B)"]);
        let result = run_episode(&task(dir.path()), &backend, &NoTools, &config(dir.path())).unwrap();
        assert_eq!(result.status, EpisodeStatus::Answered);
        assert_eq!(result.answer_text, "(B)");
        assert_eq!(result.t(), 1);
        assert!(result.trace.iter().all(|e| e.phase != Phase::Dispatch));
        assert!(dir.path().join("work/src.jpg").is_file());
    }

    #[test]
    fn malformed_turn_is_reprompted() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ScriptedBackend::from_responses(["no labels here", "Final Answer: (A)"]);
        let result = run_episode(&task(dir.path()), &backend, &NoTools, &config(dir.path())).unwrap();
        assert_eq!(result.status, EpisodeStatus::Answered);
        assert_eq!(result.t(), 2);
        let second = &backend.requests()[1];
        assert!(second
            .text()
            .ends_with(&format!("no labels here\nObservation: {REPROMPT_MESSAGE}")));
    }

    #[test]
    fn transport_failures_exhaust_budget() {
        struct Down;
        impl VisionLanguageModel for Down {
            fn complete(&self, _: &[Message], _: &CompletionParams) -> Result<String, BackendError> {
                Err(BackendError::Transport("connection refused".into()))
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let result = run_episode(&task(dir.path()), &Down, &NoTools, &config(dir.path())).unwrap();
        assert_eq!(result.status, EpisodeStatus::BackendFailure);
        assert_eq!(result.backend_calls, 1 + DEFAULT_RETRY_BUDGET);
        assert_eq!(result.answer_text, "");
        assert!(result.failure.unwrap().contains("connection refused"));
    }

    #[test]
    fn missing_task_image_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut t = task(dir.path());
        t.images[0].path = dir.path().join("missing.jpg");
        let backend = ScriptedBackend::from_responses(["Final Answer: (A)"]);
        let err = run_episode(&t, &backend, &NoTools, &config(dir.path())).unwrap_err();
        assert!(matches!(err, EpisodeError::MissingImage(_)));
        assert_eq!(backend.calls(), 0);
    }

    #[test]
    fn staging_dedups_basenames() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir_all(dir.path().join("a")).unwrap();
        std::fs::create_dir_all(dir.path().join("b")).unwrap();
        std::fs::write(dir.path().join("a/x.jpg"), b"1").unwrap();
        std::fs::write(dir.path().join("b/x.jpg"), b"2").unwrap();
        let t = TaskInstance {
            images: vec![
                ImageRef::task_input("img-0", dir.path().join("a/x.jpg")),
                ImageRef::task_input("img-1", dir.path().join("b/x.jpg")),
            ],
            ..task(dir.path())
        };
        let work = dir.path().join("w");
        std::fs::create_dir_all(&work).unwrap();
        let staged = stage_images(&t, &work, true).unwrap();
        assert_eq!(staged.images[0].path, work.join("x.jpg"));
        assert_eq!(staged.images[1].path, work.join("1_x.jpg"));
        assert_eq!(std::fs::read(work.join("1_x.jpg")).unwrap(), b"2");
    }

    #[test]
    fn apply_turn_arithmetic() {
        let state = EpisodeState::new("prompt", vec![ImageRef::task_input("img-0", "img.jpg")]);
        let turn = parsed("Thought: t\nAction Input:\n```python\nsave_depth_image()\n```\n");
        let next = apply_turn(
            &state,
            turn.clone(),
            Some("Observation: SAVED_IMAGE: depth.jpg\n".into()),
            vec![ImageRef::artifact("artifact-1-0", "depth.jpg")],
        )
        .unwrap();
        assert_eq!((next.t, next.images.len()), (1, 2));
        assert_eq!(state.t, 0);

        let terminal = apply_turn(&next, parsed("Final Answer: (A)"), None, vec![]).unwrap();
        assert_eq!(terminal.prompt_history.len(), next.prompt_history.len() + 1);

        let same_path_twice = apply_turn(
            &next,
            turn.clone(),
            None,
            vec![
                ImageRef::artifact("artifact-2-0", "depth.jpg"),
                ImageRef::artifact("artifact-2-1", "depth.jpg"),
            ],
        )
        .unwrap();
        assert_eq!(same_path_twice.images.len(), next.images.len() + 2);

        let err = apply_turn(&next, turn, None, vec![ImageRef::artifact("artifact-1-0", "x.jpg")]).unwrap_err();
        assert_eq!(err, DuplicateArtifactId("artifact-1-0".into()));
    }

    #[test]
    fn fallback_rules() {
        let options: Vec<String> = ["A", "B", "C", "D"].iter().map(|s| s.to_string()).collect();
        let mut state = EpisodeState::new("p", vec![]);
        assert_eq!(fallback_answer(&state, &options), "");
        state = apply_turn(&state, parsed("Thought: (B) seems right"), None, vec![]).unwrap();
        assert_eq!(fallback_answer(&state, &options), "(B)");

        let mut state = EpisodeState::new("p", vec![]);
        for text in [
            "Thought: hmm",
            "Thought: maybe (A)",
            "Thought: x",
            "Thought: y",
            "Thought: so (C)",
        ] {
            state = apply_turn(&state, parsed(text), None, vec![]).unwrap();
        }
        assert_eq!(fallback_answer(&state, &options), "(C)");

        let named: Vec<String> = ["left", "right"].iter().map(|s| s.to_string()).collect();
        let state = apply_turn(
            &EpisodeState::new("p", vec![]),
            parsed("Thought: not the left one, the right one"),
            None,
            vec![],
        )
        .unwrap();
        assert_eq!(fallback_answer(&state, &named), "(B)");
        let state = apply_turn(
            &EpisodeState::new("p", vec![]),
            parsed("Thought: brightness"),
            None,
            vec![],
        )
        .unwrap();
        assert_eq!(fallback_answer(&state, &named), "");
    }

    #[test]
    fn zero_shot_single_call() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ScriptedBackend::from_responses(["(A)"]);
        let result = run_zero_shot(&task(dir.path()), &backend, &config(dir.path())).unwrap();
        assert_eq!(result.answer_text, "(A)");
        assert_eq!(backend.calls(), 1);
        assert_eq!(backend.requests()[0].image_count(), 1);
    }
}
