//! HTTP service, file-backed design sessions, model registry and command
//! line interface for the levelblend toolkit.

pub mod api;
pub mod cli;
pub mod registry;
pub mod sessions;

use std::path::{Path, PathBuf};

/// Environment variable naming the data directory.
pub const DATA_DIR_ENV: &str = "LEVELBLEND_DATA_DIR";

/// Layout of the data directory: `registry.json`, `models/`, `sessions/`.
#[derive(Clone, Debug)]
pub struct DataDir {
    pub root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn registry_path(&self) -> PathBuf {
        self.root.join("registry.json")
    }

    pub fn models_dir(&self) -> PathBuf {
        self.root.join("models")
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn analysis_dir(&self) -> PathBuf {
        self.root.join("analysis")
    }
}

/// Write through a temporary sibling and rename, so readers never see a
/// partial document.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".{}.tmp", std::process::id()));
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}
