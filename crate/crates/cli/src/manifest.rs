use std::collections::BTreeMap;
use std::path::Path;

use llfl::io::{file_digest, write_json};
use serde::{Deserialize, Serialize};

use crate::error::CliResult;

/// What a command consumed and produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: BTreeMap<String, String>,
    /// Input path to its FNV-1a digest.
    pub inputs: BTreeMap<String, String>,
    /// Paths relative to the output directory.
    pub artifacts: Vec<String>,
}

impl RunManifest {
    pub fn new(command: &str, seed: Option<u64>, config: BTreeMap<String, String>) -> Self {
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            seed,
            config,
            inputs: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.insert(path.display().to_string(), file_digest(path)?);
        Ok(())
    }

    pub fn artifact(&mut self, name: impl Into<String>) {
        self.artifacts.push(name.into());
    }

    pub fn file_name(command: &str) -> String {
        format!("{command}.manifest.json")
    }

    pub fn write(&self, out: &Path) -> CliResult<()> {
        write_json(&out.join(Self::file_name(&self.command)), self)?;
        Ok(())
    }
}
