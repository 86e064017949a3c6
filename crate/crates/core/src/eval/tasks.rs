//! Benchmark task files.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::images::ImageRef;

/// One multiple-choice question over one or more images.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub id: String,
    pub subtask: String,
    pub images: Vec<ImageRef>,
    pub question: String,
    pub options: Vec<String>,
    /// Index of the correct option.
    pub gold: usize,
}

impl TaskInstance {
    /// `(A)` for index 0, `(B)` for 1, and so on.
    pub fn option_label(index: usize) -> String {
        format!("({})", option_letter(index))
    }

    pub fn gold_label(&self) -> String {
        Self::option_label(self.gold)
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.images.is_empty() {
            return Err("task has no images".into());
        }
        if !(2..=4).contains(&self.options.len()) {
            return Err(format!("expected 2 to 4 options, found {}", self.options.len()));
        }
        if self.gold >= self.options.len() {
            return Err(format!(
                "gold index {} out of range for {} options",
                self.gold,
                self.options.len()
            ));
        }
        Ok(())
    }
}

pub fn option_letter(index: usize) -> char {
    (b'A' + index as u8) as char
}

/// Parses `(A)` / `A` / `(a)` into an index.
pub fn parse_option_label(label: &str) -> Option<usize> {
    let trimmed = label.trim();
    let inner = trimmed
        .strip_prefix('(')
        .and_then(|s| s.strip_suffix(')'))
        .unwrap_or(trimmed);
    let mut chars = inner.chars();
    match (chars.next(), chars.next()) {
        (Some(c), None) if c.is_ascii_alphabetic() => Some((c.to_ascii_uppercase() as u8 - b'A') as usize),
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskFormat {
    BlinkJson,
    MmvpJson,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemDiagnostic {
    pub index: usize,
    pub id: Option<String>,
    pub message: String,
}

impl fmt::Display for ItemDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.id {
            Some(id) => write!(f, "item {} ({id}): {}", self.index, self.message),
            None => write!(f, "item {}: {}", self.index, self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot parse task file: {0}")]
    Parse(String),
    #[error("{} invalid item(s): {}", .0.len(), .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    InvariantViolation(Vec<ItemDiagnostic>),
}

#[derive(Deserialize)]
struct BlinkRow {
    id: String,
    subtask: String,
    images: Vec<String>,
    question: String,
    options: Vec<String>,
    answer: String,
}

#[derive(Deserialize)]
struct MmvpRow {
    #[serde(rename = "Index")]
    index: serde_json::Value,
    #[serde(rename = "Question")]
    question: String,
    #[serde(rename = "Options")]
    options: String,
    #[serde(rename = "Correct Answer")]
    answer: String,
}

/// Splits `"(a) Open (b) Closed"` into `["Open", "Closed"]`.
pub fn split_inline_options(text: &str) -> Vec<String> {
    let bytes = text.as_bytes();
    let mut starts = Vec::new();
    let mut expected = 0u8;
    let mut i = 0;
    while i + 2 < bytes.len() {
        if bytes[i] == b'(' && bytes[i + 1].to_ascii_lowercase() == b'a' + expected && bytes[i + 2] == b')' {
            starts.push(i);
            expected += 1;
            i += 3;
        } else {
            i += 1;
        }
    }
    starts
        .iter()
        .enumerate()
        .map(|(k, &s)| {
            let end = starts.get(k + 1).copied().unwrap_or(text.len());
            text[s + 3..end].trim().to_string()
        })
        .collect()
}

/// Loads and validates a task file; image paths are joined onto `image_root`.
pub fn load_tasks(path: &Path, format: TaskFormat, image_root: &Path) -> Result<Vec<TaskInstance>, LoadError> {
    let text = std::fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_tasks(&text, format, image_root)
}

pub fn parse_tasks(text: &str, format: TaskFormat, image_root: &Path) -> Result<Vec<TaskInstance>, LoadError> {
    let rows: Vec<serde_json::Value> = serde_json::from_str(text).map_err(|e| LoadError::Parse(e.to_string()))?;
    let mut tasks = Vec::with_capacity(rows.len());
    let mut problems = Vec::new();
    for (index, row) in rows.into_iter().enumerate() {
        let converted = match format {
            TaskFormat::BlinkJson => blink_task(row, image_root),
            TaskFormat::MmvpJson => mmvp_task(row, image_root),
        };
        let checked = converted.and_then(|t| match t.validate() {
            Ok(()) => Ok(t),
            Err(m) => Err((Some(t.id), m)),
        });
        match checked {
            Ok(task) => tasks.push(task),
            Err((id, message)) => problems.push(ItemDiagnostic { index, id, message }),
        }
    }
    if problems.is_empty() {
        Ok(tasks)
    } else {
        Err(LoadError::InvariantViolation(problems))
    }
}

type RowResult = Result<TaskInstance, (Option<String>, String)>;

fn gold_index(answer: &str, id: &str) -> Result<usize, (Option<String>, String)> {
    parse_option_label(answer).ok_or_else(|| (Some(id.to_string()), format!("bad answer label {answer:?}")))
}

fn images(root: &Path, paths: impl IntoIterator<Item = String>) -> Vec<ImageRef> {
    paths
        .into_iter()
        .enumerate()
        .map(|(i, p)| ImageRef::task_input(format!("img-{i}"), root.join(p)))
        .collect()
}

fn blink_task(row: serde_json::Value, root: &Path) -> RowResult {
    let id = row.get("id").and_then(|v| v.as_str()).map(String::from);
    let row: BlinkRow = serde_json::from_value(row).map_err(|e| (id, e.to_string()))?;
    let gold = gold_index(&row.answer, &row.id)?;
    Ok(TaskInstance {
        images: images(root, row.images),
        gold,
        id: row.id,
        subtask: row.subtask,
        question: row.question,
        options: row.options,
    })
}

fn mmvp_task(row: serde_json::Value, root: &Path) -> RowResult {
    let row: MmvpRow = serde_json::from_value(row).map_err(|e| (None, e.to_string()))?;
    let id = match &row.index {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    };
    let gold = gold_index(&row.answer, &id)?;
    Ok(TaskInstance {
        images: images(root, [format!("{id}.jpg")]),
        options: split_inline_options(&row.options),
        gold,
        subtask: "mmvp".into(),
        question: row.question,
        id,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn labels() {
        assert_eq!(parse_option_label("(A)"), Some(0));
        assert_eq!(parse_option_label(" (b) "), Some(1));
        assert_eq!(parse_option_label("D"), Some(3));
        assert_eq!(parse_option_label("(AB)"), None);
        assert_eq!(TaskInstance::option_label(2), "(C)");
    }

    #[test]
    fn blink_rows() {
        let text = r#"[{"id": "val_Relative_Depth_1", "subtask": "Relative_Depth",
            "images": ["depth/1.jpg"], "question": "Which point is closer?",
            "options": ["A", "B"], "answer": "(B)"}]"#;
        let tasks = parse_tasks(text, TaskFormat::BlinkJson, Path::new("/data")).unwrap();
        assert_eq!(tasks.len(), 1);
        assert_eq!(tasks[0].gold, 1);
        assert_eq!(tasks[0].images[0].path, PathBuf::from("/data/depth/1.jpg"));
    }

    #[test]
    fn gold_out_of_range_is_reported_per_item() {
        let text = r#"[
            {"id": "ok", "subtask": "s", "images": ["a.jpg"], "question": "q", "options": ["x", "y"], "answer": "(A)"},
            {"id": "bad", "subtask": "s", "images": ["a.jpg"], "question": "q", "options": ["w", "x", "y", "z"], "answer": "(F)"},
            {"id": "noimg", "subtask": "s", "images": [], "question": "q", "options": ["x", "y"], "answer": "(A)"}
        ]"#;
        match parse_tasks(text, TaskFormat::BlinkJson, Path::new(".")) {
            Err(LoadError::InvariantViolation(items)) => {
                assert_eq!(items.len(), 2);
                assert_eq!(items[0].id.as_deref(), Some("bad"));
                assert_eq!(items[0].index, 1);
                assert_eq!(items[1].index, 2);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_parse_error_but_empty_array_is_fine() {
        assert!(matches!(
            parse_tasks("", TaskFormat::BlinkJson, Path::new(".")),
            Err(LoadError::Parse(_))
        ));
        assert!(parse_tasks("[]", TaskFormat::BlinkJson, Path::new("."))
            .unwrap()
            .is_empty());
    }

    #[test]
    fn mmvp_rows() {
        let text = r#"[{"Index": 7, "Question": "Is the door open?", "Options": "(a) Open (b) Closed", "Correct Answer": "(b)"}]"#;
        let tasks = parse_tasks(text, TaskFormat::MmvpJson, Path::new("imgs")).unwrap();
        assert_eq!(tasks[0].id, "7");
        assert_eq!(tasks[0].subtask, "mmvp");
        assert_eq!(tasks[0].options, vec!["Open", "Closed"]);
        assert_eq!(tasks[0].gold, 1);
        assert_eq!(tasks[0].images[0].path, PathBuf::from("imgs/7.jpg"));
    }

    #[test]
    fn inline_option_split_ignores_out_of_order_markers() {
        assert_eq!(
            split_inline_options("(a) left (of the car) (b) right"),
            vec!["left (of the car)", "right"]
        );
    }
}
