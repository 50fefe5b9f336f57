//! Run manifests: what was run, on which inputs, producing which files.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub engine_version: String,
    /// Arguments that reproduce the run, without `--out`.
    pub args: Vec<String>,
    pub seed: Option<u64>,
    /// SHA-256 of the canonical model specification text, when there is one.
    pub spec_hash: Option<String>,
    /// Configuration files read by the run.
    pub config_paths: Vec<String>,
    /// Input files (absolute paths) with their hashes.
    pub inputs: Vec<FileHash>,
    /// Output files relative to the run directory.
    pub artifacts: Vec<FileHash>,
    /// Command-specific settings needed to reload the outputs.
    pub settings: BTreeMap<String, String>,
    pub started_unix: u64,
    pub finished_unix: u64,
}

pub fn now_unix() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    Ok(sha256_bytes(&bytes))
}

/// Absolute form of an input path (the file must exist).
pub fn absolute(path: &Path) -> CliResult<PathBuf> {
    fs::canonicalize(path)
        .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))
}

pub fn input_hash(path: &Path) -> CliResult<FileHash> {
    let abs = absolute(path)?;
    Ok(FileHash {
        path: abs.display().to_string(),
        sha256: sha256_file(&abs)?,
    })
}

/// Hashes of `files` (relative to `dir`), sorted by path.
pub fn artifact_hashes(dir: &Path, files: &[PathBuf]) -> CliResult<Vec<FileHash>> {
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let rel = f.strip_prefix(dir).unwrap_or(f);
        out.push(FileHash {
            path: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256_file(&dir.join(rel))?,
        });
    }
    out.sort_by(|a, b| a.path.cmp(&b.path));
    Ok(out)
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>, started_unix: u64) -> Self {
        RunManifest {
            command: command.into(),
            engine_version: env!("CARGO_PKG_VERSION").into(),
            args,
            seed: None,
            spec_hash: None,
            config_paths: Vec::new(),
            inputs: Vec::new(),
            artifacts: Vec::new(),
            settings: BTreeMap::new(),
            started_unix,
            finished_unix: started_unix,
        }
    }

    pub fn write(&mut self, dir: &Path) -> CliResult<()> {
        self.finished_unix = now_unix();
        let text = serde_json::to_string_pretty(self)?;
        fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
        Ok(())
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Manifest(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))
    }

    /// Reads `dir/manifest.json` and checks every artifact hash.
    pub fn read_verified(dir: &Path) -> CliResult<Self> {
        let m = Self::read(&dir.join(MANIFEST_FILE))?;
        for a in &m.artifacts {
            let path = dir.join(&a.path);
            let actual = fs::read(&path)
                .map(|b| sha256_bytes(&b))
                .map_err(|e| CliError::Manifest(format!("{}: {e}", path.display())))?;
            if actual != a.sha256 {
                return Err(CliError::Manifest(format!(
                    "{} does not match its recorded hash",
                    path.display()
                )));
            }
        }
        Ok(m)
    }

    pub fn setting(&self, key: &str) -> CliResult<&str> {
        self.settings
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| CliError::Manifest(format!("manifest lacks setting `{key}`")))
    }
}
