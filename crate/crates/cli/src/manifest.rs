//! `manifest.json` under `--out`: the command, resolved settings and a
//! SHA-256 per artifact.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, Result};

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub argv: Vec<String>,
    pub settings: serde_json::Map<String, serde_json::Value>,
    pub artifacts: Vec<Artifact>,
    pub seconds: f64,
    #[serde(skip)]
    out: PathBuf,
    #[serde(skip)]
    started: Option<Instant>,
}

impl Manifest {
    pub fn new(command: &str, out: &Path) -> Result<Self> {
        std::fs::create_dir_all(out).map_err(|e| CliError::io(out, e))?;
        Ok(Self {
            tool: "mutualfriends",
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            argv: std::env::args().collect(),
            settings: Default::default(),
            artifacts: Vec::new(),
            seconds: 0.0,
            out: out.to_path_buf(),
            started: Some(Instant::now()),
        })
    }

    pub fn out(&self) -> &Path {
        &self.out
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Writes an artifact under the output directory and records it.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.record(name)?;
        Ok(path)
    }

    /// Records a file some other code wrote under the output directory.
    pub fn record(&mut self, name: &str) -> Result<()> {
        let path = self.path(name);
        let bytes = std::fs::read(&path).map_err(|e| CliError::io(&path, e))?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(Artifact {
            path: name.to_string(),
            bytes: bytes.len() as u64,
            sha256: format!("{:x}", Sha256::digest(&bytes)),
        });
        Ok(())
    }

    pub fn finish(mut self, settings: serde_json::Map<String, serde_json::Value>) -> Result<()> {
        self.settings = settings;
        self.seconds = self.started.map_or(0.0, |s| s.elapsed().as_secs_f64());
        let path = self.path("manifest.json");
        let text = serde_json::to_string_pretty(&self)?;
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}
