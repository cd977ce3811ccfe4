//! Run manifests: every emitted artifact is listed with a content digest so
//! a run's outputs can be verified after the fact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::report::write_atomic;
use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct Artifact {
    /// Path relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct RunManifest {
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_path: Option<String>,
    pub scenarios: Vec<String>,
    pub seeds: Vec<u64>,
    pub artifacts: Vec<Artifact>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl RunManifest {
    pub fn new(command: &str, config_path: Option<&Path>) -> Self {
        Self {
            command: command.into(),
            config_path: config_path.map(|p| p.display().to_string()),
            scenarios: Vec::new(),
            seeds: Vec::new(),
            artifacts: Vec::new(),
        }
    }

    /// Writes `bytes` under `out_dir/name` (atomically) and records its
    /// digest.
    pub fn emit(&mut self, out_dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = out_dir.join(name);
        write_atomic(&path, bytes)?;
        self.artifacts.push(Artifact {
            path: name.into(),
            sha256: sha256_hex(bytes),
        });
        Ok(path)
    }

    /// Writes the manifest itself as `manifest.json` in the output
    /// directory.
    pub fn write(&self, out_dir: &Path) -> Result<PathBuf, CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        let path = out_dir.join(MANIFEST_FILE);
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}

/// Checks that every artifact listed in `out_dir/manifest.json` exists and
/// matches its recorded digest.
pub fn verify_manifest(out_dir: &Path) -> Result<RunManifest, CliError> {
    let path = out_dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let manifest: RunManifest = serde_json::from_str(&text)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for artifact in &manifest.artifacts {
        let artifact_path = out_dir.join(&artifact.path);
        let bytes = std::fs::read(&artifact_path).map_err(|e| {
            CliError::Config(format!("missing artifact {}: {e}", artifact_path.display()))
        })?;
        let digest = sha256_hex(&bytes);
        if digest != artifact.sha256 {
            return Err(CliError::Config(format!(
                "artifact {} digest mismatch: manifest {}, actual {digest}",
                artifact.path, artifact.sha256
            )));
        }
    }
    Ok(manifest)
}
