//! Run manifests: what was run, on which bytes, producing which bytes.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    /// Relative to the manifest's directory when the file lives below it.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub tool_version: String,
    pub timestamp: String,
    pub method: Option<String>,
    pub parameters: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// RFC 3339 UTC time, taken from `SOURCE_DATE_EPOCH` when set.
fn timestamp() -> String {
    let fixed = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|s| chrono::DateTime::from_timestamp(s, 0));
    fixed
        .unwrap_or_else(chrono::Utc::now)
        .to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

fn display_path(base: &Path, path: &Path) -> String {
    let abs = |p: &Path| fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
    let (base, full) = (abs(base), abs(path));
    match full.strip_prefix(&base) {
        Ok(rel) => rel.to_string_lossy().into_owned(),
        Err(_) => full.to_string_lossy().into_owned(),
    }
}

/// Collects digests while a command runs and writes the manifest at the end.
pub struct ManifestBuilder {
    path: PathBuf,
    base: PathBuf,
    manifest: RunManifest,
}

impl ManifestBuilder {
    pub fn new(path: PathBuf, command: &str, method: Option<String>, parameters: serde_json::Value, seed: Option<u64>) -> Self {
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
        Self {
            path,
            base,
            manifest: RunManifest {
                command: command.into(),
                args: std::env::args().skip(1).collect(),
                tool_version: env!("CARGO_PKG_VERSION").into(),
                timestamp: timestamp(),
                method,
                parameters,
                seed,
                inputs: Vec::new(),
                outputs: Vec::new(),
            },
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.manifest.inputs.push(FileDigest {
            path: display_path(&self.base, path),
            sha256: sha256_hex(bytes),
        });
    }

    /// Write `bytes` to `path` and record the digest.
    pub fn output(&mut self, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.manifest.outputs.push(FileDigest {
            path: display_path(&self.base, path),
            sha256: sha256_hex(bytes),
        });
        Ok(())
    }

    pub fn finish(self) -> Result<RunManifest, CliError> {
        let json = serde_json::to_string_pretty(&self.manifest).expect("manifest serialises") + "\n";
        if let Some(dir) = self.path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        fs::write(&self.path, json).map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.manifest)
    }
}

/// Recompute every recorded digest. Returns the mismatching paths.
pub fn verify(manifest_path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(manifest_path).map_err(|e| CliError::io(manifest_path, e))?;
    let manifest: RunManifest =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", manifest_path.display())))?;
    let base = manifest_path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut bad = Vec::new();
    for d in manifest.inputs.iter().chain(&manifest.outputs) {
        let p = Path::new(&d.path);
        let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
        let bytes = fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        if sha256_hex(&bytes) != d.sha256 {
            bad.push(d.path.clone());
        }
    }
    Ok(bad)
}
