//! Run records written next to every command's primary output.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::commands::Command;
use crate::error::CliError;
use crate::io::{read_json, write_json};

/// What was run, with which settings, and what it produced. Running
/// `config` again reproduces the outputs byte for byte.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub command: String,
    pub config: Command,
    pub seed: Option<u64>,
    pub outputs: Vec<PathBuf>,
    pub wall_time_secs: f64,
    pub artifact_version: String,
}

/// Sidecar location for a primary output file.
pub fn sidecar_path(primary: &Path) -> PathBuf {
    let mut s = primary.as_os_str().to_owned();
    s.push(".run.json");
    PathBuf::from(s)
}

impl RunRecord {
    pub fn write(&self) -> Result<PathBuf, CliError> {
        let primary = self.outputs.first().ok_or_else(|| CliError::input("run produced no outputs"))?;
        let path = sidecar_path(primary);
        write_json(&path, self)?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        read_json(path)
    }
}
