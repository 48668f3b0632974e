use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use toothseg_core::segmenter::Skipped;

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to re-run a subcommand and reproduce its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Full argument list, program name first.
    pub argv: Vec<String>,
    /// Working directory the arguments are relative to.
    pub cwd: PathBuf,
    pub seed: u64,
    pub jobs: usize,
    /// Resolved subcommand options, defaults included.
    pub config: serde_json::Value,
    pub outputs: Vec<PathBuf>,
    /// Wall-clock seconds per stage.
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skipped: Vec<Skipped>,
}

impl RunManifest {
    pub fn new(command: &str, argv: &[String], seed: u64, jobs: usize, config: serde_json::Value) -> Result<Self> {
        Ok(Self {
            tool: "toothseg".to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv: argv.to_vec(),
            cwd: std::env::current_dir().context("reading the working directory")?,
            seed,
            jobs,
            config,
            outputs: Vec::new(),
            timings: BTreeMap::new(),
            skipped: Vec::new(),
        })
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}
