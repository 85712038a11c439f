use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use crate::fsutil::write_atomic;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command run. `args` plus `working_dir` are enough to replay
/// it; everything else is for the reader.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub args: Vec<String>,
    pub working_dir: PathBuf,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub duration_seconds: f64,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, args: Vec<String>) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            args,
            working_dir: std::env::current_dir()?,
            config: serde_json::Value::Null,
            seed: None,
            inputs: Vec::new(),
            outputs: Vec::new(),
            duration_seconds: 0.0,
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn write(&mut self, out_dir: &Path, elapsed: Duration) -> Result<PathBuf> {
        self.duration_seconds = elapsed.as_secs_f64();
        let path = out_dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        let back = Self::load(&path)?;
        anyhow::ensure!(back == *self, "manifest {} did not read back identically", path.display());
        Ok(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }
}
