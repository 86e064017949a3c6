//! Specialized sub-agents: one templated backend call each.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::backend::{BackendError, CompletionParams, ContentPart, Message, VisionLanguageModel};
use crate::images::ImageRef;

pub const CAPTIONING_TEMPLATE: &str = include_str!("../assets/prompts/captioning.txt");
pub const COMPARISON_TEMPLATE: &str = include_str!("../assets/prompts/comparison.txt");
pub const VISUAL_PROMPT_TEMPLATE: &str = include_str!("../assets/prompts/visual_prompt.txt");

/// Focus used when the caller asks for a general caption or comparison.
pub const DEFAULT_FOCUS: &str = "the overall scene";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Captioning,
    VisualPromptDescription,
    Comparison,
}

impl AgentKind {
    pub const ALL: [AgentKind; 3] = [
        AgentKind::Captioning,
        AgentKind::VisualPromptDescription,
        AgentKind::Comparison,
    ];

    /// Name of the tool function that invokes this agent.
    pub fn tool_name(self) -> &'static str {
        match self {
            AgentKind::Captioning => "image_captioning",
            AgentKind::VisualPromptDescription => "visual_prompt_describe",
            AgentKind::Comparison => "image_comparison",
        }
    }

    pub fn from_tool_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.tool_name() == name)
    }

    pub fn template(self) -> &'static str {
        match self {
            AgentKind::Captioning => CAPTIONING_TEMPLATE,
            AgentKind::VisualPromptDescription => VISUAL_PROMPT_TEMPLATE,
            AgentKind::Comparison => COMPARISON_TEMPLATE,
        }
    }

    fn accepts_focus(self) -> bool {
        !matches!(self, AgentKind::VisualPromptDescription)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgentRequest {
    pub agent: AgentKind,
    pub image_paths: Vec<PathBuf>,
    pub focus: Option<String>,
}

impl AgentRequest {
    pub fn captioning(image: impl Into<PathBuf>, focus: Option<&str>) -> Self {
        Self {
            agent: AgentKind::Captioning,
            image_paths: vec![image.into()],
            focus: focus.map(String::from),
        }
    }

    pub fn visual_prompt(image: impl Into<PathBuf>) -> Self {
        Self {
            agent: AgentKind::VisualPromptDescription,
            image_paths: vec![image.into()],
            focus: None,
        }
    }

    pub fn comparison<I, P>(images: I, focus: Option<&str>) -> Self
    where
        I: IntoIterator<Item = P>,
        P: Into<PathBuf>,
    {
        Self {
            agent: AgentKind::Comparison,
            image_paths: images.into_iter().map(Into::into).collect(),
            focus: focus.map(String::from),
        }
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        let n = self.image_paths.len();
        let arity_ok = match self.agent {
            AgentKind::Captioning | AgentKind::VisualPromptDescription => n == 1,
            AgentKind::Comparison => n >= 2,
        };
        if !arity_ok {
            return Err(AgentError::TemplateMismatch(format!(
                "{} does not accept {n} image(s)",
                self.agent.tool_name()
            )));
        }
        if self.focus.is_some() && !self.agent.accepts_focus() {
            return Err(AgentError::TemplateMismatch(format!(
                "{} takes no focus",
                self.agent.tool_name()
            )));
        }
        Ok(())
    }

    /// Resolves relative image paths against `base`.
    pub fn resolved(mut self, base: &Path) -> Self {
        for path in &mut self.image_paths {
            if path.is_relative() {
                *path = base.join(&*path);
            }
        }
        self
    }
}

#[derive(Debug, Error)]
pub enum AgentError {
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("template mismatch: {0}")]
    TemplateMismatch(String),
    #[error("bad agent arguments: {0}")]
    BadArguments(String),
    #[error("cannot read image {0}")]
    UnreadableImage(PathBuf),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// Renders the agent's template with its placeholders filled.
pub fn render_agent_prompt(request: &AgentRequest) -> Result<String, AgentError> {
    request.validate()?;
    let images = request
        .image_paths
        .iter()
        .map(|p| p.display().to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let focus = request.focus.as_deref().unwrap_or(DEFAULT_FOCUS);
    Ok(fill_template(request.agent.template(), focus, &images))
}

/// Substitutes `{focus}` and `{image}` in an agent template.
pub fn fill_template(template: &str, focus: &str, images: &str) -> String {
    template.replace("{focus}", focus).replace("{image}", images)
}

/// Runs one sub-agent: exactly one backend call with the images attached.
pub fn run_agent(
    request: &AgentRequest,
    backend: &dyn VisionLanguageModel,
    params: &CompletionParams,
) -> Result<String, AgentError> {
    let prompt = render_agent_prompt(request)?;
    for path in &request.image_paths {
        if std::fs::File::open(path).is_err() {
            return Err(AgentError::UnreadableImage(path.clone()));
        }
    }
    let mut parts = vec![ContentPart::text(prompt)];
    parts.extend(
        request
            .image_paths
            .iter()
            .enumerate()
            .map(|(i, p)| ContentPart::image(ImageRef::task_input(format!("agent-img-{i}"), p))),
    );
    Ok(backend.complete(&[Message::user(parts)], params)?)
}

/// Something that can answer sub-agent requests.
pub trait AgentHandler: Send + Sync {
    fn handle(&self, request: &AgentRequest) -> Result<String, AgentError>;
}

/// Answers sub-agent requests with a model backend.
pub struct BackendAgents {
    backend: Arc<dyn VisionLanguageModel>,
    params: CompletionParams,
}

impl BackendAgents {
    pub fn new(backend: Arc<dyn VisionLanguageModel>, params: CompletionParams) -> Self {
        Self { backend, params }
    }
}

impl AgentHandler for BackendAgents {
    fn handle(&self, request: &AgentRequest) -> Result<String, AgentError> {
        run_agent(request, self.backend.as_ref(), &self.params)
    }
}

/// Callback body posted by an executor: `{agent, args}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CallbackPayload {
    pub agent: String,
    #[serde(default)]
    pub args: Value,
}

impl CallbackPayload {
    /// Maps the wire payload onto a typed request (paths left as given).
    pub fn to_request(&self) -> Result<AgentRequest, AgentError> {
        let agent =
            AgentKind::from_tool_name(&self.agent).ok_or_else(|| AgentError::UnknownAgent(self.agent.clone()))?;
        let args = match &self.args {
            Value::Null => serde_json::Map::new(),
            Value::Object(map) => map.clone(),
            other => return Err(AgentError::BadArguments(format!("args must be an object, got {other}"))),
        };
        let allowed: &[&str] = match agent {
            AgentKind::Captioning => &["image_path", "focus"],
            AgentKind::VisualPromptDescription => &["image_path"],
            AgentKind::Comparison => &["image_paths", "focus"],
        };
        if let Some(key) = args.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(AgentError::BadArguments(format!(
                "unexpected argument {key:?} for {}",
                self.agent
            )));
        }
        let focus = match args.get("focus") {
            None | Some(Value::Null) => None,
            Some(Value::String(s)) => Some(s.clone()),
            Some(other) => return Err(AgentError::BadArguments(format!("focus must be a string, got {other}"))),
        };
        let image_paths = match agent {
            AgentKind::Comparison => match args.get("image_paths") {
                Some(Value::Array(items)) => items
                    .iter()
                    .map(|v| {
                        v.as_str()
                            .map(PathBuf::from)
                            .ok_or_else(|| AgentError::BadArguments("image_paths must hold strings".into()))
                    })
                    .collect::<Result<Vec<_>, _>>()?,
                _ => return Err(AgentError::BadArguments("image_paths must be a list".into())),
            },
            _ => match args.get("image_path") {
                Some(Value::String(s)) => vec![PathBuf::from(s)],
                None if agent == AgentKind::VisualPromptDescription => vec![PathBuf::from("image.jpg")],
                _ => return Err(AgentError::BadArguments("image_path must be a string".into())),
            },
        };
        let request = AgentRequest {
            agent,
            image_paths,
            focus,
        };
        request.validate()?;
        Ok(request)
    }
}

/// Routes an executor callback to the matching sub-agent and returns its text.
pub fn handle_agent_callback(
    payload: &CallbackPayload,
    workdir: &Path,
    handler: &dyn AgentHandler,
) -> Result<String, AgentError> {
    let request = payload.to_request()?.resolved(workdir);
    if let Some(missing) = request.image_paths.iter().find(|p| std::fs::File::open(p).is_err()) {
        return Err(AgentError::UnreadableImage(missing.clone()));
    }
    handler.handle(&request)
}
