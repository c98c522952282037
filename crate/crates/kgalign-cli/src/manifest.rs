//! Per-stage run manifests with content-hashed artifacts.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    /// Artifact path (relative to the run directory) -> sha256.
    pub artifacts: BTreeMap<String, String>,
    pub git: Option<String>,
    pub wall_time_secs: f64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    format!("{:x}", h.finalize())
}

pub fn sha256_file(path: &Path) -> anyhow::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}

fn git_describe() -> Option<String> {
    let out = std::process::Command::new("git")
        .args(["describe", "--always", "--dirty"])
        .output()
        .ok()?;
    if !out.status.success() {
        return None;
    }
    Some(String::from_utf8_lossy(&out.stdout).trim().to_string())
}

/// Collects artifacts while a stage runs, then writes
/// `manifest_<command>.json` into the run directory.
pub struct ManifestBuilder {
    run_dir: PathBuf,
    command: String,
    seed: u64,
    config_hash: String,
    inputs: BTreeMap<String, String>,
    artifacts: Vec<PathBuf>,
    started: Instant,
}

impl ManifestBuilder {
    pub fn new(run_dir: &Path, command: &str, seed: u64, config_json: &str) -> Self {
        Self {
            run_dir: run_dir.to_path_buf(),
            command: command.to_string(),
            seed,
            config_hash: sha256_hex(config_json.as_bytes()),
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
            started: Instant::now(),
        }
    }

    pub fn input_file(&mut self, label: &str, path: &Path) -> anyhow::Result<()> {
        let hash = if path.is_file() {
            sha256_file(path)?
        } else if path.is_dir() {
            // Hash of sorted (name, file hash) pairs.
            let mut entries: Vec<(String, String)> = Vec::new();
            let mut names: Vec<_> = std::fs::read_dir(path)?
                .filter_map(|e| e.ok())
                .map(|e| e.path())
                .filter(|p| p.is_file())
                .collect();
            names.sort();
            for p in names {
                entries.push((
                    p.file_name().unwrap().to_string_lossy().into_owned(),
                    sha256_file(&p)?,
                ));
            }
            sha256_hex(format!("{entries:?}").as_bytes())
        } else {
            "absent".to_string()
        };
        self.inputs
            .insert(format!("{label}:{}", path.display()), hash);
        Ok(())
    }

    /// Register a produced file; hashed at write time.
    pub fn artifact(&mut self, path: &Path) {
        self.artifacts.push(path.to_path_buf());
    }

    pub fn write(self) -> anyhow::Result<PathBuf> {
        let mut artifacts = BTreeMap::new();
        for p in &self.artifacts {
            let rel = p
                .strip_prefix(&self.run_dir)
                .unwrap_or(p)
                .to_string_lossy()
                .replace('\\', "/");
            artifacts.insert(rel, sha256_file(p)?);
        }
        let manifest = Manifest {
            command: self.command.clone(),
            seed: self.seed,
            config_hash: self.config_hash,
            inputs: self.inputs,
            artifacts,
            git: git_describe(),
            wall_time_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = self.run_dir.join(format!("manifest_{}.json", self.command));
        std::fs::write(&path, serde_json::to_string_pretty(&manifest)?)?;
        Ok(path)
    }
}

