use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::fsio::{atomic_write, read_to_string, sha256_file, sha256_hex};

pub const SOFTWARE_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    /// Relative to the output directory when inside it.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

impl FileRecord {
    pub fn of(path: &Path, root: &Path) -> Result<Self> {
        let bytes = std::fs::metadata(path).map_err(crate::error::io_err(path))?.len();
        Ok(Self {
            path: display_path(path, root),
            bytes,
            sha256: sha256_file(path)?,
        })
    }
}

pub fn display_path(path: &Path, root: &Path) -> String {
    path.strip_prefix(root)
        .unwrap_or(path)
        .to_string_lossy()
        .replace('\\', "/")
}

/// Provenance of one stage unit: what it read, how it was configured, what it wrote.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub stage: String,
    pub unit: Option<String>,
    pub inputs: Vec<FileRecord>,
    /// Hash of the configuration sections this stage depends on.
    pub fingerprint: String,
    /// The full resolved experiment configuration.
    pub config: serde_json::Value,
    pub seeds: BTreeMap<String, u64>,
    pub artifacts: Vec<FileRecord>,
    pub wall_clock_seconds: f64,
    pub software_version: String,
}

pub fn fingerprint(value: &serde_json::Value) -> String {
    sha256_hex(value.to_string().as_bytes())
}

/// `manifests/<stage>[/<unit>].json` below the output directory.
pub fn manifest_path(root: &Path, stage: &str, unit: Option<&str>) -> PathBuf {
    let dir = root.join("manifests");
    match unit {
        Some(u) => dir.join(stage).join(format!("{u}.json")),
        None => dir.join(format!("{stage}.json")),
    }
}

impl RunManifest {
    pub fn load(path: &Path) -> Result<Option<Self>> {
        if !path.exists() {
            return Ok(None);
        }
        Ok(serde_json::from_str(&read_to_string(path)?).ok())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        atomic_write(path, text.as_bytes())
    }

    /// True when the recorded fingerprint and input hashes match `inputs` and
    /// every artifact is still on disk unchanged.
    pub fn is_current(&self, root: &Path, fingerprint: &str, inputs: &[FileRecord]) -> bool {
        self.fingerprint == fingerprint
            && self.inputs == inputs
            && self.artifacts.iter().all(|a| {
                let p = resolve(root, &a.path);
                sha256_file(&p).is_ok_and(|h| h == a.sha256)
            })
    }
}

pub fn resolve(root: &Path, recorded: &str) -> PathBuf {
    let p = Path::new(recorded);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        root.join(p)
    }
}
