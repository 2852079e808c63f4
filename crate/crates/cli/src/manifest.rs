use std::path::Path;

use csl_core::Scenario;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything needed to repeat a run: the command, the effective config
/// (overrides already applied) and the output switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(default)]
    pub emit_trajectories: bool,
    pub scenario: Option<Scenario>,
    pub master_seed: Option<u64>,
    pub version: String,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<String>,
    pub exit_code: i32,
}

/// A bundled recipe. Manifests parse as recipes too, so either can be rerun.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Recipe {
    pub command: String,
    pub config: serde_json::Value,
    #[serde(default)]
    pub emit_trajectories: bool,
    /// Exit code the recipe is expected to produce.
    #[serde(default)]
    pub expect_exit: i32,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}
