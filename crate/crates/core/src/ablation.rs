use serde::{Deserialize, Serialize};

/// Switches that remove one component of the framework each.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AblationFlags {
    /// Sub-agent prompts are inlined into the orchestrator prompt and the
    /// agent tools are deregistered.
    #[serde(default)]
    pub no_multi_agent: bool,
    /// The orchestrator sees image paths as text only; sub-agents and tools
    /// still receive the real images.
    #[serde(default)]
    pub no_visual_input: bool,
    #[serde(default)]
    pub no_specialized_agents: bool,
    #[serde(default)]
    pub no_vision_experts: bool,
}

impl AblationFlags {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn agents_registered(&self) -> bool {
        !(self.no_multi_agent || self.no_specialized_agents)
    }

    pub fn experts_registered(&self) -> bool {
        !self.no_vision_experts
    }

    /// Parses the CLI spelling of a single flag.
    pub fn set(&mut self, name: &str) -> Result<(), String> {
        match name {
            "multi-agent" => self.no_multi_agent = true,
            "visual-input" => self.no_visual_input = true,
            "spec-agents" => self.no_specialized_agents = true,
            "vision-experts" => self.no_vision_experts = true,
            other => return Err(format!("unknown ablation {other:?}")),
        }
        Ok(())
    }
}
