//! Initial orchestrator prompt.

use std::path::Path;

use thiserror::Error;

use crate::agents::{fill_template, AgentKind, DEFAULT_FOCUS};
use crate::eval::TaskInstance;
use crate::images::{relative_to, ImageRef};
use crate::tools::ToolRegistry;

pub const ORCHESTRATOR_TEMPLATE: &str = include_str!("../assets/prompts/orchestrator.txt");

const REQUIRED: [&str; 3] = ["tools", "question", "image"];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PromptError {
    #[error("template placeholder {{{0}}} has no value or is missing")]
    MissingPlaceholder(String),
    #[error("task image {0} is not readable")]
    MissingImage(String),
}

/// Prompt text plus the images attached after it, in order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RenderedPrompt {
    pub text: String,
    pub images: Vec<ImageRef>,
}

/// What the prompt depends on besides the task and the tools.
#[derive(Debug, Clone, Copy)]
pub struct PromptOptions<'a> {
    pub workdir: &'a Path,
    /// Inline the sub-agent instructions into the orchestrator prompt.
    pub inline_agents: bool,
    /// Leave images out of the attachments; paths still appear as text.
    pub text_only: bool,
    pub verify_images: bool,
}

/// Question followed by its lettered choices.
pub fn render_question(task: &TaskInstance) -> String {
    let mut text = format!("{}\nSelect from the following choices.", task.question);
    for (i, option) in task.options.iter().enumerate() {
        text.push_str(&format!("\n{} {option}", TaskInstance::option_label(i)));
    }
    text
}

/// Image paths as the tools see them: relative to the workdir when inside it.
pub fn image_paths_text(images: &[ImageRef], workdir: &Path) -> String {
    images
        .iter()
        .map(|img| relative_to(workdir, &img.path).display().to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

/// The three sub-agent templates, filled for the task images.
pub fn inlined_agent_instructions(images: &str) -> String {
    let mut text =
        String::from("\nInstead of calling specialized agents, follow these instructions yourself when they help:\n");
    for kind in AgentKind::ALL {
        text.push('\n');
        text.push_str(&fill_template(kind.template(), DEFAULT_FOCUS, images));
    }
    text
}

pub fn format_initial_prompt(
    task: &TaskInstance,
    tools: &ToolRegistry,
    options: PromptOptions<'_>,
) -> Result<RenderedPrompt, PromptError> {
    format_prompt_with(ORCHESTRATOR_TEMPLATE, task, tools, options)
}

pub fn format_prompt_with(
    template: &str,
    task: &TaskInstance,
    tools: &ToolRegistry,
    options: PromptOptions<'_>,
) -> Result<RenderedPrompt, PromptError> {
    if options.verify_images {
        if let Some(missing) = task.images.iter().find(|img| std::fs::File::open(&img.path).is_err()) {
            return Err(PromptError::MissingImage(missing.path.display().to_string()));
        }
    }
    let images = image_paths_text(&task.images, options.workdir);
    let agent_instructions = if options.inline_agents {
        inlined_agent_instructions(&images)
    } else {
        String::new()
    };
    let question = render_question(task);
    let tool_list = tools.render_tool_list();
    let functions = tools.render_function_heads();
    let value = |name: &str| -> Option<&str> {
        match name {
            "tools" => Some(&tool_list),
            "functions" => Some(&functions),
            "agent_instructions" => Some(&agent_instructions),
            "question" => Some(&question),
            "image" => Some(&images),
            _ => None,
        }
    };
    let text = substitute(template, value)?;
    for name in REQUIRED {
        if !template.contains(&format!("{{{name}}}")) {
            return Err(PromptError::MissingPlaceholder(name.to_string()));
        }
    }
    Ok(RenderedPrompt {
        text,
        images: if options.text_only {
            Vec::new()
        } else {
            task.images.clone()
        },
    })
}

/// Single pass over `{name}` placeholders; substituted text is not rescanned.
fn substitute<'v>(template: &str, value: impl Fn(&str) -> Option<&'v str>) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() * 2);
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let name_len = after
            .find(|c: char| !(c.is_ascii_alphanumeric() || c == '_'))
            .unwrap_or(after.len());
        if name_len > 0 && after[name_len..].starts_with('}') {
            let name = &after[..name_len];
            out.push_str(value(name).ok_or_else(|| PromptError::MissingPlaceholder(name.to_string()))?);
            rest = &after[name_len + 1..];
        } else {
            out.push('{');
            rest = after;
        }
    }
    out.push_str(rest);
    Ok(out)
}
