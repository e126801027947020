//! Run manifests: what was run, with which resolved configuration and
//! seeds, and the SHA-256 of every file written. Manifests carry no
//! timestamps, so a rerun reproduces them byte for byte.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Result, ToolError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seeds {
    pub base_seed: u64,
    /// Replicate `r` uses `base_seed + r` for `r < replicates`.
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub study: Option<String>,
    pub config: RunConfig,
    pub config_sha256: String,
    /// The resolved study or command parameters.
    pub spec: serde_json::Value,
    pub seeds: Seeds,
    pub outputs: Vec<OutputEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| ToolError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn new(
        command: &str,
        study: Option<&str>,
        config: &RunConfig,
        spec: serde_json::Value,
        seeds: Seeds,
    ) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            study: study.map(Into::into),
            config: config.clone(),
            config_sha256: sha256_hex(config.to_toml().as_bytes()),
            spec,
            seeds,
            outputs: Vec::new(),
        }
    }

    /// Hash `files` (relative to `dir`) into the output list.
    pub fn record(&mut self, dir: &Path, files: &[String]) -> Result<()> {
        for f in files {
            let sha256 = file_sha256(&dir.join(f))?;
            self.outputs.push(OutputEntry { file: f.clone(), sha256 });
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest is always serialisable");
        s.push('\n');
        s
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| ToolError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| ToolError::Config(format!("{}: {e}", path.display())))
    }

    /// Files whose current hash under `dir` differs from the recorded one.
    pub fn mismatches(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut bad = Vec::new();
        for o in &self.outputs {
            let p = dir.join(&o.file);
            if !p.exists() || file_sha256(&p)? != o.sha256 {
                bad.push(p);
            }
        }
        Ok(bad)
    }
}
