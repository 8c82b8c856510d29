//! Per-stage manifests: what went in, what came out, and under which config.
//!
//! A manifest holds no timestamps or absolute output paths, so rerunning a stage with the
//! same inputs reproduces it byte for byte.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    pub tool_version: String,
    pub config_fingerprint: String,
    /// Hash of the settings and input checksums this stage depends on; a stage is skipped
    /// when this and every output checksum still match.
    pub stage_key: String,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub registry_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_checksum: Option<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub notes: BTreeMap<String, serde_json::Value>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| crate::io_err(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Path as recorded in a manifest: relative to the output directory when inside it.
pub fn display_path(path: &Path, out: &Path) -> String {
    path.strip_prefix(out).unwrap_or(path).display().to_string()
}

pub fn digest(path: &Path, out: &Path) -> Result<FileDigest> {
    Ok(FileDigest {
        path: display_path(path, out),
        sha256: file_sha256(path)?,
    })
}

pub fn digests(paths: &[PathBuf], out: &Path) -> Result<Vec<FileDigest>> {
    paths.iter().map(|p| digest(p, out)).collect()
}

pub fn manifest_path(out: &Path, stage: &str) -> PathBuf {
    out.join("manifests").join(format!("{stage}.json"))
}

impl Manifest {
    pub fn write(&self, out: &Path) -> Result<PathBuf> {
        let path = manifest_path(out, &self.stage);
        crate::ensure_parent(&path)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| crate::io_err(&path, e))?;
        Ok(path)
    }

    pub fn read(out: &Path, stage: &str) -> Option<Manifest> {
        let text = std::fs::read_to_string(manifest_path(out, stage)).ok()?;
        serde_json::from_str(&text).ok()
    }

    /// True when a previous run with the same key left every output intact.
    pub fn is_current(out: &Path, stage: &str, stage_key: &str) -> bool {
        let Some(m) = Manifest::read(out, stage) else {
            return false;
        };
        m.stage_key == stage_key
            && m.outputs.iter().all(|d| {
                let p = out.join(&d.path);
                file_sha256(&p).is_ok_and(|h| h == d.sha256)
            })
    }
}
