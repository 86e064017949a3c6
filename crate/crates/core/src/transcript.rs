//! Labeled-section transcript grammar.
//!
//! A model turn is a sequence of sections, each introduced by one of the
//! label literals at the start of a line (leading spaces/tabs allowed).
//! Parsing never fails hard: anything the grammar rejects comes back as a
//! [`MalformedTurn`] carrying the raw text, so the orchestrator can re-prompt.
//!
//! Every byte of the input belongs to exactly one section span, which means
//! [`ParsedTurn::text`] reproduces the input exactly.

use serde::{Deserialize, Serialize};

use crate::runtime::ExecutionResult;

/// Info string that opens an executable code fence.
pub const FENCE_INFO: &str = "python";
pub const DEFAULT_TRUNCATION_LIMIT: usize = 10_000;
pub const TRUNCATION_MARKER: &str = "…[truncated]";

const FENCE: &str = "```";
const ACTION_LITERAL: &str = "Action:";
const OBSERVATION_PREFIX: &str = "Observation: ";
const OBSERVATION_ERROR_PREFIX: &str = "Observation: ERROR: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SectionLabel {
    TaskRequirement,
    Thought,
    ActionInput,
    Observation,
    FinalAnswer,
}

impl SectionLabel {
    pub const ALL: [SectionLabel; 5] = [
        SectionLabel::TaskRequirement,
        SectionLabel::Thought,
        SectionLabel::ActionInput,
        SectionLabel::Observation,
        SectionLabel::FinalAnswer,
    ];

    /// The exact label text, colon included.
    pub fn literal(self) -> &'static str {
        match self {
            SectionLabel::TaskRequirement => "Task Requirement:",
            SectionLabel::Thought => "Thought:",
            SectionLabel::ActionInput => "Action Input:",
            SectionLabel::Observation => "Observation:",
            SectionLabel::FinalAnswer => "Final Answer:",
        }
    }
}

/// One labeled section. `span` is the raw source text of the section,
/// label line included; `body_start` is the byte offset in `span` where the
/// content after the label begins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Section {
    pub label: SectionLabel,
    pub span: String,
    pub body_start: usize,
    /// True for the Thought section synthesized from text before the first label.
    pub synthetic: bool,
}

impl Section {
    /// Section content with the label stripped and surrounding whitespace trimmed.
    pub fn body(&self) -> &str {
        self.span[self.body_start..].trim()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeBlock {
    pub source: String,
    pub fence_info: String,
}

impl CodeBlock {
    /// Builds a python block, normalizing the trailing newline to exactly one.
    pub fn python(source: &str) -> Self {
        let mut source = source.trim_end_matches(['\n', '\r']).to_string();
        source.push('\n');
        Self {
            source,
            fence_info: FENCE_INFO.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedTurn {
    pub sections: Vec<Section>,
    pub code: Option<CodeBlock>,
    pub terminal: bool,
}

impl ParsedTurn {
    /// Concatenation of every section span; equal to the parsed input.
    pub fn text(&self) -> String {
        self.sections.iter().map(|s| s.span.as_str()).collect()
    }

    pub fn section(&self, label: SectionLabel) -> Option<&Section> {
        self.sections.iter().find(|s| s.label == label)
    }

    pub fn labels(&self) -> Vec<SectionLabel> {
        self.sections.iter().map(|s| s.label).collect()
    }

    pub fn is_action(&self) -> bool {
        !self.terminal && self.code.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MalformedReason {
    NoRecognizedLabel,
    UnterminatedFence,
    ActionInputWithoutCode,
    DuplicateFinalAnswer,
    DuplicateActionInput,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MalformedTurn {
    pub raw: String,
    pub reason: MalformedReason,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Marker {
    Label(SectionLabel),
    Action,
}

fn line_marker(line: &str) -> Option<(Marker, usize)> {
    let indent = line.len() - line.trim_start_matches([' ', '\t']).len();
    let rest = &line[indent..];
    for label in SectionLabel::ALL {
        if rest.starts_with(label.literal()) {
            return Some((Marker::Label(label), indent + label.literal().len()));
        }
    }
    if rest.starts_with(ACTION_LITERAL) {
        return Some((Marker::Action, indent + ACTION_LITERAL.len()));
    }
    None
}

fn is_fence_open(line: &str) -> bool {
    line.trim().strip_prefix(FENCE).is_some_and(|info| info == FENCE_INFO)
}

fn is_fence_close(line: &str) -> bool {
    line.trim() == FENCE
}

struct Boundary {
    offset: usize,
    marker: Marker,
    /// Absolute byte offset where the content after the label starts.
    body: usize,
}

/// Splits one model output into labeled sections.
pub fn parse_turn(raw: &str) -> Result<ParsedTurn, MalformedTurn> {
    let malformed = |reason| MalformedTurn {
        raw: raw.to_string(),
        reason,
    };

    let mut boundaries = Vec::new();
    let mut in_fence = false;
    let mut offset = 0;
    for line in raw.split_inclusive('\n') {
        if in_fence {
            in_fence = !is_fence_close(line);
        } else if is_fence_open(line) {
            in_fence = true;
        } else if let Some((marker, label_end)) = line_marker(line) {
            boundaries.push(Boundary {
                offset,
                marker,
                body: offset + label_end,
            });
        }
        offset += line.len();
    }
    if in_fence {
        return Err(malformed(MalformedReason::UnterminatedFence));
    }
    if boundaries.is_empty() {
        return Err(malformed(MalformedReason::NoRecognizedLabel));
    }

    let mut sections = Vec::new();
    if boundaries[0].offset > 0 {
        sections.push(Section {
            label: SectionLabel::Thought,
            span: raw[..boundaries[0].offset].to_string(),
            body_start: 0,
            synthetic: true,
        });
    }

    let mut i = 0;
    while i < boundaries.len() {
        let start = boundaries[i].offset;
        let (label, body, next) = match boundaries[i].marker {
            Marker::Label(label) => (label, boundaries[i].body, i + 1),
            // "Action:" folds into an immediately following "Action Input:".
            Marker::Action => match boundaries.get(i + 1) {
                Some(b) if b.marker == Marker::Label(SectionLabel::ActionInput) => {
                    (SectionLabel::ActionInput, b.body, i + 2)
                }
                _ => (SectionLabel::ActionInput, boundaries[i].body, i + 1),
            },
        };
        let end = boundaries.get(next).map_or(raw.len(), |b| b.offset);
        sections.push(Section {
            label,
            span: raw[start..end].to_string(),
            body_start: body - start,
            synthetic: false,
        });
        i = next;
    }

    let count = |label| sections.iter().filter(|s| s.label == label).count();
    if count(SectionLabel::FinalAnswer) > 1 {
        return Err(malformed(MalformedReason::DuplicateFinalAnswer));
    }
    if count(SectionLabel::ActionInput) > 1 {
        return Err(malformed(MalformedReason::DuplicateActionInput));
    }

    let code = match sections.iter().find(|s| s.label == SectionLabel::ActionInput) {
        Some(section) => match first_code_block(&section.span[section.body_start..]) {
            Some(code) => Some(code),
            None => return Err(malformed(MalformedReason::ActionInputWithoutCode)),
        },
        None => None,
    };

    let terminal = count(SectionLabel::FinalAnswer) == 1;
    Ok(ParsedTurn {
        sections,
        code,
        terminal,
    })
}

fn first_code_block(text: &str) -> Option<CodeBlock> {
    let mut lines = text.split_inclusive('\n');
    lines.by_ref().find(|l| is_fence_open(l))?;
    let mut source = String::new();
    for line in lines {
        if is_fence_close(line) {
            if source.trim().is_empty() {
                return None;
            }
            return Some(CodeBlock::python(&source));
        }
        source.push_str(line);
    }
    None
}

/// Renders a tool result as the Observation segment fed back to the model.
pub fn render_observation(result: &ExecutionResult, truncation_limit: usize) -> String {
    if let Some(error) = &result.error {
        return format!("{OBSERVATION_ERROR_PREFIX}{error}");
    }
    let stdout = &result.stdout;
    match stdout.char_indices().nth(truncation_limit) {
        Some((cut, _)) => format!("{OBSERVATION_PREFIX}{}{TRUNCATION_MARKER}", &stdout[..cut]),
        None => format!("{OBSERVATION_PREFIX}{stdout}"),
    }
}

/// Text of the Final Answer section, label stripped and trimmed.
///
/// Calling this on a non-terminal turn is a contract violation.
pub fn extract_final_answer(turn: &ParsedTurn) -> String {
    assert!(turn.terminal, "extract_final_answer called on a non-terminal turn");
    turn.section(SectionLabel::FinalAnswer)
        .map(|s| s.body().to_string())
        .expect("terminal turn has a Final Answer section")
}
