//! `manifest.json` (the only artifact carrying wall-clock data) and the
//! run-directory lock.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const LOCK_FILE: &str = ".lock";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub seconds: f64,
    /// Unix time at which the stage finished.
    pub finished_at: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config: serde_json::Value,
    pub versions: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, ArtifactRecord>,
    pub timings: BTreeMap<String, StageTiming>,
    pub warnings: Vec<String>,
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path).map_err(CliError::io(path))?;
    Ok(hex(&Sha256::digest(bytes)))
}

pub fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn load(dir: &Path) -> CliResult<Option<Self>> {
        let path = dir.join(MANIFEST_FILE);
        if !path.is_file() {
            return Ok(None);
        }
        let bytes = fs::read(&path).map_err(CliError::io(&path))?;
        serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    /// Records (or refreshes) an artifact and its digest.
    pub fn record(&mut self, dir: &Path, name: &str, relative: &str) -> CliResult<()> {
        let sha256 = sha256_file(&dir.join(relative))?;
        self.artifacts.insert(
            name.to_string(),
            ArtifactRecord {
                path: relative.to_string(),
                sha256,
            },
        );
        Ok(())
    }

    pub fn warn(&mut self, message: String) {
        log::warn!("{message}");
        if !self.warnings.contains(&message) {
            self.warnings.push(message);
        }
    }

    /// Every referenced artifact must exist and hash to its digest; returns
    /// the names that do not.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.artifacts
            .iter()
            .filter(|(_, rec)| sha256_file(&dir.join(&rec.path)).map_or(true, |h| h != rec.sha256))
            .map(|(name, _)| name.clone())
            .collect()
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }
}

/// Writes through a temporary sibling and renames into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    let tmp = path.with_extension(format!(
        "{}.tmp",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(CliError::io(&tmp))?;
    fs::rename(&tmp, path).map_err(CliError::io(path))
}

/// Exclusive ownership of an output directory; released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> CliResult<Self> {
        fs::create_dir_all(dir).map_err(CliError::io(dir))?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                let _ = writeln!(f, "{}", std::process::id());
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(dir.to_path_buf())),
            Err(e) => Err(CliError::Io { path, source: e }),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}
