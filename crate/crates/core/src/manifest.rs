//! Run manifest: enough to re-run a command and to check its outputs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::report::{read_json, write_json};
use crate::{Error, Result};

pub const MANIFEST_FORMAT: &str = "item-run v1";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format: String,
    /// Full argument vector, program name excluded.
    pub command: Vec<String>,
    pub config_hash: String,
    /// Config snapshot file inside the run directory.
    pub config_snapshot: String,
    pub seeds: Vec<u64>,
    pub cycles: Vec<String>,
    pub checkpoints: Vec<String>,
    pub artifacts: Vec<Artifact>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

pub fn sha256_file(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn new(command: Vec<String>, config_hash: String, config_snapshot: String) -> Self {
        RunManifest {
            format: MANIFEST_FORMAT.into(),
            command,
            config_hash,
            config_snapshot,
            seeds: Vec::new(),
            cycles: Vec::new(),
            checkpoints: Vec::new(),
            artifacts: Vec::new(),
            started_unix_s: unix_now(),
            finished_unix_s: 0,
        }
    }

    /// Records a file under `run_dir` with its digest.
    pub fn add_artifact(&mut self, run_dir: &Path, file: &Path) -> Result<()> {
        let rel = file.strip_prefix(run_dir).unwrap_or(file);
        let entry = Artifact {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(file)?,
        };
        self.artifacts.retain(|a| a.path != entry.path);
        self.artifacts.push(entry);
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        Ok(())
    }

    /// Adds every regular file below `run_dir` except the manifest itself.
    pub fn add_tree(&mut self, run_dir: &Path) -> Result<()> {
        let mut stack = vec![run_dir.to_path_buf()];
        while let Some(dir) = stack.pop() {
            let entries = fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))?;
            for entry in entries {
                let path: PathBuf = entry.map_err(|e| Error::io(&dir, e))?.path();
                if path.is_dir() {
                    stack.push(path);
                } else if path != run_dir.join(MANIFEST_FILE) {
                    self.add_artifact(run_dir, &path)?;
                }
            }
        }
        Ok(())
    }

    pub fn finish_and_write(&mut self, run_dir: &Path) -> Result<PathBuf> {
        self.finished_unix_s = unix_now();
        let path = run_dir.join(MANIFEST_FILE);
        write_json(self, &path)?;
        Ok(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: RunManifest = read_json(path.as_ref())?;
        if m.format != MANIFEST_FORMAT {
            return Err(Error::Format(format!(
                "{}: unsupported manifest format `{}`",
                path.as_ref().display(),
                m.format
            )));
        }
        Ok(m)
    }

    /// Checks every listed artifact against its recorded digest.
    pub fn verify(&self, run_dir: &Path) -> Result<()> {
        for a in &self.artifacts {
            let actual = sha256_file(run_dir.join(&a.path))?;
            if actual != a.sha256 {
                return Err(Error::Validation(format!("artifact {} changed since the run", a.path)));
            }
        }
        Ok(())
    }
}
