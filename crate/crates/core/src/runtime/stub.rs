//! Deterministic stand-ins for the vision tools.
//!
//! Each stub reproduces the printed format of the real tool with outputs that
//! depend only on the input files. The Python recorder under
//! `tests/fixtures/equivalence` implements the same contract.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use super::interp::{py_float_repr, py_str_repr, Literal, PrintArg, Statement, StaticCall};
use crate::agents::{AgentHandler, AgentKind, AgentRequest};
use crate::images::contain;
use crate::tools::ToolRegistry;

pub const SAVED_IMAGE_PREFIX: &str = "SAVED_IMAGE: ";
pub const NO_VISUAL_PROMPTS: &str = "NO_VISUAL_PROMPTS_FOUND";
/// Suffix of the sidecar file that lists visual-prompt circles for an image.
pub const MARKERS_SUFFIX: &str = ".markers.json";

/// A red circle drawn on an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
pub struct Marker {
    pub x: i64,
    pub y: i64,
    pub r: i64,
}

/// Output of running a statement list: stdout so far plus the first exception.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ProgramOutput {
    pub stdout: String,
    pub error: Option<String>,
}

/// Python-style exception text, `Type: message`.
#[derive(Debug, Clone, PartialEq, Eq)]
struct PyError(String);

impl PyError {
    fn new(kind: &str, message: impl AsRef<str>) -> Self {
        Self(format!("{kind}: {}", message.as_ref()))
    }

    fn not_found(path: &str) -> Self {
        Self::new(
            "FileNotFoundError",
            format!("[Errno 2] No such file or directory: {}", py_str_repr(path)),
        )
    }
}

pub struct StubToolbox<'a> {
    workdir: &'a Path,
    registry: &'a ToolRegistry,
    agents: Option<&'a dyn AgentHandler>,
}

impl<'a> StubToolbox<'a> {
    pub fn new(workdir: &'a Path, registry: &'a ToolRegistry, agents: Option<&'a dyn AgentHandler>) -> Self {
        Self {
            workdir,
            registry,
            agents,
        }
    }

    /// Runs statements in order, stopping at the first error.
    pub fn run(&self, statements: &[Statement]) -> ProgramOutput {
        let mut out = ProgramOutput::default();
        let mut names: HashMap<String, Literal> = HashMap::new();
        for statement in statements {
            let step = match statement {
                Statement::Print(args) => {
                    let rendered: Vec<String> = args
                        .iter()
                        .map(|arg| match arg {
                            PrintArg::Literal(lit) => lit.to_py_str(),
                            PrintArg::Name(name) => {
                                names.get(name).map(Literal::to_py_str).unwrap_or_else(|| "None".into())
                            }
                        })
                        .collect();
                    out.stdout.push_str(&rendered.join(" "));
                    out.stdout.push('\n');
                    Ok(())
                }
                Statement::Call(call) => self.call(call, &mut out.stdout).map(|value| {
                    if let Some(name) = &call.bound_name {
                        names.insert(name.clone(), value);
                    }
                }),
            };
            if let Err(PyError(text)) = step {
                out.error = Some(text);
                break;
            }
        }
        out
    }

    fn call(&self, call: &StaticCall, stdout: &mut String) -> Result<Literal, PyError> {
        let tool = self
            .registry
            .get(&call.function)
            .ok_or_else(|| PyError::new("NameError", format!("name '{}' is not defined", call.function)))?;
        let text = |name: &str| -> Result<Option<String>, PyError> {
            match call.argument(tool, name) {
                None | Some(Literal::None) => Ok(None),
                Some(Literal::Str(s)) => Ok(Some(s.clone())),
                Some(other) => Err(PyError::new(
                    "TypeError",
                    format!("{name} must be str, not {}", other.to_py_str()),
                )),
            }
        };
        let path = |name: &str| -> Result<String, PyError> {
            text(name)?.ok_or_else(|| PyError::new("TypeError", format!("{name} must be str")))
        };

        if let Some(kind) = AgentKind::from_tool_name(&call.function) {
            let images = match kind {
                AgentKind::Comparison => match call.argument(tool, "image_paths") {
                    Some(Literal::StrList(items)) => items.iter().map(PathBuf::from).collect(),
                    _ => return Err(PyError::new("TypeError", "image_paths must be a list of str")),
                },
                _ => vec![PathBuf::from(path("image_path")?)],
            };
            let focus = if kind == AgentKind::VisualPromptDescription {
                None
            } else {
                text("focus")?
            };
            let request = AgentRequest {
                agent: kind,
                image_paths: images,
                focus,
            }
            .resolved(self.workdir);
            let handler = self
                .agents
                .ok_or_else(|| PyError::new("RuntimeError", "specialized agents are unavailable"))?;
            let answer = handler
                .handle(&request)
                .map_err(|e| PyError::new("RuntimeError", e.to_string()))?;
            stdout.push_str(&answer);
            stdout.push('\n');
            return Ok(Literal::None);
        }

        match call.function.as_str() {
            "save_depth_image" => {
                let input = path("image_path")?;
                let saved = path("saved_path")?;
                let (w, h) = self.dimensions(&input)?;
                let target = self.writable(&saved, "saved_path")?;
                write_gray(&target, depth_gradient(w, h))?;
                stdout.push_str(&format!("{SAVED_IMAGE_PREFIX}{saved}\n"));
                Ok(Literal::None)
            }
            "locate_visual_prompts" => {
                let input = path("image_path")?;
                self.dimensions(&input)?;
                let markers = self.markers(&input)?;
                stdout.push_str(&describe_markers(&markers));
                Ok(Literal::None)
            }
            "compute_clip_similarity" => {
                let a = path("image_path1")?;
                let b = path("image_path2")?;
                let value = clip_similarity(&self.read(&a)?, &self.read(&b)?);
                stdout.push_str(&py_float_repr(value));
                stdout.push('\n');
                Ok(Literal::Float(value))
            }
            "segment_image" => {
                let input = path("image_path")?;
                let saved = text("save_path")?.unwrap_or_else(|| derived_path(&input, "_segmented"));
                let (w, h) = self.dimensions(&input)?;
                let target = self.writable(&saved, "save_path")?;
                write_gray(&target, quadrants(w, h))?;
                stdout.push_str(&format!("{SAVED_IMAGE_PREFIX}{saved}\n"));
                let (hw, hh) = (w / 2, h / 2);
                let regions = [(0, 0, hw, hh), (hw, 0, w, hh), (0, hh, hw, h), (hw, hh, w, h)];
                for (i, (x1, y1, x2, y2)) in regions.iter().enumerate() {
                    stdout.push_str(&format!("REGION {}: {x1} {y1} {x2} {y2}\n", i + 1));
                }
                Ok(Literal::Str(saved))
            }
            "detect_objects" => {
                let input = path("image_path")?;
                let (w, h) = self.dimensions(&input)?;
                let saved = derived_path(&input, "_detected");
                let target = self.writable(&saved, "image_path")?;
                write_gray(&target, GrayImage::from_pixel(w, h, Luma([128])))?;
                stdout.push_str(&format!("object 0 0 {w} {h} 1.0\n"));
                stdout.push_str(&format!("{SAVED_IMAGE_PREFIX}{saved}\n"));
                Ok(Literal::None)
            }
            other => Err(PyError::new("NameError", format!("name '{other}' is not defined"))),
        }
    }

    fn resolve(&self, path: &str) -> PathBuf {
        self.workdir.join(path)
    }

    fn read(&self, path: &str) -> Result<Vec<u8>, PyError> {
        std::fs::read(self.resolve(path)).map_err(|_| PyError::not_found(path))
    }

    fn dimensions(&self, path: &str) -> Result<(u32, u32), PyError> {
        let resolved = self.resolve(path);
        if !resolved.is_file() {
            return Err(PyError::not_found(path));
        }
        image::image_dimensions(&resolved).map_err(|_| {
            PyError::new(
                "UnidentifiedImageError",
                format!("cannot identify image file {}", py_str_repr(path)),
            )
        })
    }

    fn writable(&self, path: &str, param: &str) -> Result<PathBuf, PyError> {
        contain(self.workdir, Path::new(path))
            .ok_or_else(|| PyError::new("ValueError", format!("{param} must be inside the working directory")))
    }

    fn markers(&self, image_path: &str) -> Result<Vec<Marker>, PyError> {
        let sidecar = self.resolve(&format!("{image_path}{MARKERS_SUFFIX}"));
        match std::fs::read(&sidecar) {
            Err(_) => Ok(Vec::new()),
            Ok(bytes) => {
                serde_json::from_slice(&bytes).map_err(|e| PyError::new("ValueError", format!("bad marker file: {e}")))
            }
        }
    }
}

/// Python's `os.path.splitext(path)[0] + suffix + ext`.
pub fn derived_path(path: &str, suffix: &str) -> String {
    let base_start = path.rfind('/').map_or(0, |i| i + 1);
    let base = &path[base_start..];
    let stem_len = base.trim_start_matches('.').len();
    let leading_dots = base.len() - stem_len;
    match base[leading_dots..].rfind('.') {
        Some(dot) => {
            let split = base_start + leading_dots + dot;
            format!("{}{suffix}{}", &path[..split], &path[split..])
        }
        None => format!("{path}{suffix}"),
    }
}

/// Vertical gradient: row 0 is black, the last row white.
pub fn depth_gradient(width: u32, height: u32) -> GrayImage {
    let span = height.saturating_sub(1);
    GrayImage::from_fn(width, height, |_, y| {
        let value = (255 * y + span / 2).checked_div(span).unwrap_or(0);
        Luma([value as u8])
    })
}

fn quadrants(width: u32, height: u32) -> GrayImage {
    let (hw, hh) = (width / 2, height / 2);
    GrayImage::from_fn(width, height, |x, y| {
        let index = u8::from(x >= hw) + 2 * u8::from(y >= hh);
        Luma([index * 85])
    })
}

fn write_gray(path: &Path, img: GrayImage) -> Result<(), PyError> {
    img.save(path)
        .map_err(|e| PyError::new("ValueError", format!("cannot save {}: {e}", path.display())))
}

/// Lists circles left to right as `CIRCLE A: (x, y) r=R`.
pub fn describe_markers(markers: &[Marker]) -> String {
    if markers.is_empty() {
        return format!("{NO_VISUAL_PROMPTS}\n");
    }
    let mut sorted = markers.to_vec();
    sorted.sort_by_key(|m| (m.x, m.y));
    sorted
        .iter()
        .zip(b'A'..=b'Z')
        .map(|(m, label)| format!("CIRCLE {}: ({}, {}) r={}\n", label as char, m.x, m.y, m.r))
        .collect()
}

/// Pseudo-similarity: 1.0 for identical bytes, else a hash-derived value in [0, 1).
pub fn clip_similarity(a: &[u8], b: &[u8]) -> f64 {
    if a == b {
        return 1.0;
    }
    let mut digests = [Sha256::digest(a), Sha256::digest(b)];
    digests.sort();
    let mut hasher = Sha256::new();
    hasher.update(digests[0]);
    hasher.update(digests[1]);
    let combined = hasher.finalize();
    let prefix = u64::from_be_bytes(combined[..8].try_into().expect("8 bytes"));
    (prefix >> 11) as f64 / (1u64 << 53) as f64
}
