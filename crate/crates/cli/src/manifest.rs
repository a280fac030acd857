use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use vibeswipe::Result;

use crate::config::RunConfig;

/// Written next to the outputs of every run. The timestamp lives here and
/// nowhere else, so all other outputs are reproducible byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: String,
    pub config_version: u32,
    pub config_sha256: String,
    pub seed: u64,
    pub finished_unix_s: u64,
    pub args: Vec<String>,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(command: &str, cfg: &RunConfig, outputs: Vec<String>) -> Self {
        Manifest {
            command: command.into(),
            tool_version: vibeswipe::VERSION.into(),
            config_version: cfg.version,
            config_sha256: cfg.sha256(),
            seed: cfg.seed,
            finished_unix_s: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            args: std::env::args().collect(),
            outputs,
        }
    }

    /// Writes `<command>.manifest.json` and the resolved configuration.
    pub fn write(&self, dir: &Path, cfg: &RunConfig) -> Result<()> {
        std::fs::write(dir.join(format!("{}.manifest.json", self.command)), serde_json::to_string_pretty(self)?)?;
        std::fs::write(dir.join("config.resolved.toml"), cfg.canonical())?;
        Ok(())
    }
}
