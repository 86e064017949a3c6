//! Tool registry: the functions the orchestrator may call from its code blocks.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ablation::AblationFlags;
use crate::runtime::Literal;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolKind {
    VisionExpert,
    SpecializedAgent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamType {
    Path,
    PathList,
    Text,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolParameter {
    pub name: String,
    pub ty: ParamType,
    /// Python default; `Some` means the parameter is optional.
    pub default: Option<Literal>,
}

impl ToolParameter {
    fn required(name: &str, ty: ParamType) -> Self {
        Self {
            name: name.to_string(),
            ty,
            default: None,
        }
    }

    fn optional(name: &str, ty: ParamType, default: Literal) -> Self {
        Self {
            name: name.to_string(),
            ty,
            default: Some(default),
        }
    }

    pub fn is_optional(&self) -> bool {
        self.default.is_some()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    /// Function head shown to the model, verbatim.
    pub docstring: String,
    pub kind: ToolKind,
    pub parameters: Vec<ToolParameter>,
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("duplicate tool name {0:?}")]
pub struct DuplicateTool(pub String);

#[derive(Debug, Clone, PartialEq)]
pub struct ToolRegistry {
    tools: Vec<ToolDescriptor>,
}

macro_rules! head {
    ($name:literal) => {
        include_str!(concat!("../assets/functions/", $name, ".txt"))
    };
}

fn head_text(raw: &str) -> String {
    raw.strip_suffix('\n').unwrap_or(raw).to_string()
}

fn text(s: &str) -> Literal {
    Literal::Str(s.to_string())
}

impl ToolRegistry {
    pub fn new(tools: Vec<ToolDescriptor>) -> Result<Self, DuplicateTool> {
        for (i, tool) in tools.iter().enumerate() {
            if tools[..i].iter().any(|t| t.name == tool.name) {
                return Err(DuplicateTool(tool.name.clone()));
            }
        }
        Ok(Self { tools })
    }

    /// The eight built-in tools, in prompt order.
    pub fn builtin() -> Self {
        use ParamType::*;
        use ToolKind::*;
        let tool = |name: &str, doc: &str, kind, parameters| ToolDescriptor {
            name: name.to_string(),
            docstring: head_text(doc),
            kind,
            parameters,
        };
        let tools = vec![
            tool(
                "image_comparison",
                head!("image_comparison"),
                SpecializedAgent,
                vec![
                    ToolParameter::required("image_paths", PathList),
                    ToolParameter::optional("focus", Text, Literal::None),
                ],
            ),
            tool(
                "image_captioning",
                head!("image_captioning"),
                SpecializedAgent,
                vec![
                    ToolParameter::required("image_path", Path),
                    ToolParameter::optional("focus", Text, Literal::None),
                ],
            ),
            tool(
                "visual_prompt_describe",
                head!("visual_prompt_describe"),
                SpecializedAgent,
                vec![ToolParameter::optional("image_path", Path, text("image.jpg"))],
            ),
            tool(
                "save_depth_image",
                head!("save_depth_image"),
                VisionExpert,
                vec![
                    ToolParameter::optional("image_path", Path, text("image.jpg")),
                    ToolParameter::optional("saved_path", Path, text("depth.jpg")),
                ],
            ),
            tool(
                "locate_visual_prompts",
                head!("locate_visual_prompts"),
                VisionExpert,
                vec![ToolParameter::optional("image_path", Path, text("image.jpg"))],
            ),
            tool(
                "compute_clip_similarity",
                head!("compute_clip_similarity"),
                VisionExpert,
                vec![
                    ToolParameter::required("image_path1", Path),
                    ToolParameter::required("image_path2", Path),
                ],
            ),
            tool(
                "segment_image",
                head!("segment_image"),
                VisionExpert,
                vec![
                    ToolParameter::required("image_path", Path),
                    ToolParameter::optional("save_path", Path, Literal::None),
                ],
            ),
            tool(
                "detect_objects",
                head!("detect_objects"),
                VisionExpert,
                vec![ToolParameter::required("image_path", Path)],
            ),
        ];
        Self::new(tools).expect("builtin tool names are unique")
    }

    /// Built-in tools minus whatever the ablation removes.
    pub fn for_ablation(flags: &AblationFlags) -> Self {
        let mut registry = Self::builtin();
        registry.tools.retain(|t| match t.kind {
            ToolKind::SpecializedAgent => flags.agents_registered(),
            ToolKind::VisionExpert => flags.experts_registered(),
        });
        registry
    }

    pub fn get(&self, name: &str) -> Option<&ToolDescriptor> {
        self.tools.iter().find(|t| t.name == name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ToolDescriptor> {
        self.tools.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.tools.iter().map(|t| t.name.as_str()).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.tools.is_empty()
    }

    /// One `- name` line per tool.
    pub fn render_tool_list(&self) -> String {
        self.tools
            .iter()
            .map(|t| format!("- {}", t.name))
            .collect::<Vec<_>>()
            .join("\n")
    }

    /// Function heads separated by blank lines.
    pub fn render_function_heads(&self) -> String {
        self.tools
            .iter()
            .map(|t| t.docstring.as_str())
            .collect::<Vec<_>>()
            .join("\n\n")
    }
}

impl Default for ToolRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}
