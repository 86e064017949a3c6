use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImageOrigin {
    TaskInput,
    ToolArtifact,
}

/// An image in an episode's visual context.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRef {
    pub id: String,
    pub path: PathBuf,
    pub origin: ImageOrigin,
}

impl ImageRef {
    pub fn task_input(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            origin: ImageOrigin::TaskInput,
        }
    }

    pub fn artifact(id: impl Into<String>, path: impl Into<PathBuf>) -> Self {
        Self {
            id: id.into(),
            path: path.into(),
            origin: ImageOrigin::ToolArtifact,
        }
    }
}

/// Resolves `.` and `..` components without touching the filesystem.
pub fn normalize_lexically(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for component in path.components() {
        match component {
            Component::CurDir => {}
            Component::ParentDir => {
                if !out.pop() {
                    out.push("..");
                }
            }
            other => out.push(other),
        }
    }
    out
}

/// Joins `path` onto `root` and returns the result only if it stays inside `root`.
pub fn contain(root: &Path, path: &Path) -> Option<PathBuf> {
    let root = normalize_lexically(root);
    let joined = normalize_lexically(&root.join(path));
    (joined.starts_with(&root) && joined != root).then_some(joined)
}

/// Path relative to `root` when contained in it, else the path unchanged.
pub fn relative_to(root: &Path, path: &Path) -> PathBuf {
    let root = normalize_lexically(root);
    let path = normalize_lexically(path);
    path.strip_prefix(&root).map(Path::to_path_buf).unwrap_or(path)
}

pub fn mime_type(path: &Path) -> &'static str {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase)
        .as_deref()
    {
        Some("png") => "image/png",
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("gif") => "image/gif",
        Some("webp") => "image/webp",
        Some("bmp") => "image/bmp",
        _ => "application/octet-stream",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn containment() {
        let root = Path::new("/work/ep1");
        assert_eq!(
            contain(root, Path::new("depth.jpg")),
            Some(PathBuf::from("/work/ep1/depth.jpg"))
        );
        assert_eq!(
            contain(root, Path::new("sub/../depth.jpg")),
            Some(PathBuf::from("/work/ep1/depth.jpg"))
        );
        assert_eq!(contain(root, Path::new("../escape.jpg")), None);
        assert_eq!(contain(root, Path::new("/etc/passwd")), None);
        assert_eq!(
            contain(root, Path::new("/work/ep1/./x.png")),
            Some(PathBuf::from("/work/ep1/x.png"))
        );
        assert_eq!(contain(root, Path::new(".")), None);
    }

    #[test]
    fn relative_paths() {
        assert_eq!(
            relative_to(Path::new("/w"), Path::new("/w/a/b.png")),
            PathBuf::from("a/b.png")
        );
        assert_eq!(
            relative_to(Path::new("/w"), Path::new("/x/b.png")),
            PathBuf::from("/x/b.png")
        );
    }
}
