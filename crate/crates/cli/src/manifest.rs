use std::fs;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use mewls::{ContinuationConfig, DatasetConfig, Example2Variant, TerminationReport};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn now_utc() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

/// The data a run was computed from.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputRecord {
    pub source: String,
    /// Path of the copy inside the run directory, when one was made.
    pub copy: Option<String>,
    pub fingerprint: String,
    pub m: usize,
    pub n: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OracleParams {
    pub mse: f64,
    pub resolution: usize,
}

/// A later command that wrote into an existing run directory.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Followup {
    pub command: String,
    pub command_line: Vec<String>,
    pub started_utc: String,
    pub finished_utc: String,
    pub params: serde_json::Value,
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub command_line: Vec<String>,
    pub started_utc: String,
    pub finished_utc: String,
    pub dataset_config: Option<DatasetConfig>,
    pub example2_variant: Option<Example2Variant>,
    pub continuation_config: Option<ContinuationConfig>,
    pub oracle: Option<OracleParams>,
    pub input: Option<InputRecord>,
    pub termination: Option<TerminationReport>,
    pub outputs: Vec<String>,
    #[serde(default)]
    pub followups: Vec<Followup>,
}

impl RunManifest {
    pub fn new(command: &str, started_utc: String) -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            command_line: std::env::args().collect(),
            started_utc,
            finished_utc: String::new(),
            dataset_config: None,
            example2_variant: None,
            continuation_config: None,
            oracle: None,
            input: None,
            termination: None,
            outputs: Vec::new(),
            followups: Vec::new(),
        }
    }

    pub fn path(dir: &Path) -> PathBuf {
        dir.join(MANIFEST_FILE)
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = Self::path(dir);
        let text = fs::read_to_string(&path)
            .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("corrupt manifest {}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        write_json(&Self::path(dir), self)
    }

    /// Every file this run and its followups wrote, manifest excluded.
    pub fn all_outputs(&self) -> impl Iterator<Item = &String> {
        self.outputs
            .iter()
            .chain(self.followups.iter().flat_map(|f| f.outputs.iter()))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::usage(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

/// Creates `dir` for a new run. An existing manifest belongs to another run and is
/// only replaced with `force`, which also removes the files that run recorded.
pub fn prepare_run_dir(dir: &Path, force: bool) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let path = RunManifest::path(dir);
    if !path.exists() {
        return Ok(());
    }
    if !force {
        return Err(CliError::usage(format!(
            "{} already holds a run manifest; choose another --out or pass --force",
            dir.display()
        )));
    }
    if let Ok(old) = RunManifest::load(dir) {
        for name in old.all_outputs() {
            let stale = dir.join(name);
            if stale.is_file() {
                fs::remove_file(&stale).map_err(|e| CliError::io(&stale, e))?;
            }
        }
    }
    Ok(())
}
