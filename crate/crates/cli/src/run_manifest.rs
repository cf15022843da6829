use std::path::{Path, PathBuf};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

/// Provenance record written next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<String>,
    /// Output files, relative to the output directory.
    pub outputs: Vec<String>,
    pub tool_version: String,
    /// UTC milliseconds since the Unix epoch.
    pub started_at_ms: u64,
    pub duration_ms: u64,
}

/// What a command reports back for its run manifest.
#[derive(Debug, Clone, Default)]
pub struct Outcome {
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<String>,
    /// Set when outputs were written but the command should still exit with an error.
    pub partial_failure: Option<String>,
}

pub fn epoch_ms(t: SystemTime) -> u64 {
    t.duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl RunManifest {
    pub fn new(command: &str, outcome: Outcome, started: SystemTime, elapsed: Duration) -> Self {
        Self {
            command: command.to_string(),
            config: outcome.config,
            seed: outcome.seed,
            inputs: outcome.inputs.iter().map(|p| p.display().to_string()).collect(),
            outputs: outcome.outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_at_ms: epoch_ms(started),
            duration_ms: elapsed.as_millis() as u64,
        }
    }

    pub fn write(&self, out_dir: &Path) -> Result<()> {
        std::fs::create_dir_all(out_dir).map_err(CliError::io(out_dir))?;
        let path = out_dir.join(RUN_MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(CliError::io(&path))
    }
}
