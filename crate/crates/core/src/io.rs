//! JSON file helpers that report the offending path.

use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;
use thiserror::Error;

use crate::geometry::Camera;
use crate::pose2d::TrackedPose2D;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{}: {source}", path.display())]
    Fs { path: PathBuf, source: std::io::Error },
    #[error("{}: {message}", path.display())]
    Parse { path: PathBuf, message: String },
}

impl IoError {
    pub fn path(&self) -> &Path {
        match self {
            Self::Fs { path, .. } | Self::Parse { path, .. } => path,
        }
    }

    pub fn is_not_found(&self) -> bool {
        matches!(self, Self::Fs { source, .. } if source.kind() == std::io::ErrorKind::NotFound)
    }
}

pub fn read_text(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Fs { path: path.to_path_buf(), source })
}

pub fn write_text(path: &Path, text: &str) -> Result<(), IoError> {
    std::fs::write(path, text).map_err(|source| IoError::Fs { path: path.to_path_buf(), source })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse { path: path.to_path_buf(), message: e.to_string() })
}

/// Pretty-printed JSON with a trailing newline.
pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut text = serde_json::to_string_pretty(value).expect("value serializes to JSON");
    text.push('\n');
    write_text(path, &text)
}

pub fn read_poses(path: &Path) -> Result<Vec<TrackedPose2D>, IoError> {
    read_json(path)
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>, IoError> {
    let cams: Vec<Camera> = read_json(path)?;
    for (i, c) in cams.iter().enumerate() {
        if c.id != i {
            return Err(IoError::Parse {
                path: path.to_path_buf(),
                message: format!("camera ids must be 0..{} in order; entry {i} has id {}", cams.len(), c.id),
            });
        }
    }
    Ok(cams)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_file_error_names_the_path() {
        let err = read_poses(Path::new("/nonexistent/poses2d.json")).unwrap_err();
        assert!(err.is_not_found());
        assert!(err.to_string().contains("/nonexistent/poses2d.json"));
    }

    #[test]
    fn parse_errors_name_the_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("cameras.json");
        write_text(&p, "[{\"id\": 0}]").unwrap();
        let err = read_cameras(&p).unwrap_err();
        assert!(matches!(err, IoError::Parse { .. }));
        assert!(err.to_string().contains("cameras.json"));
    }
}
