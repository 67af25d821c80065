//! JSON sidecars recording what produced an artifact.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use draftforge_core::config::Config;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub tool_version: &'static str,
    pub config: Config,
    /// Keys set explicitly by a config file, `--set` or a dedicated flag.
    pub overrides: Vec<String>,
    pub inputs: Vec<InputHash>,
    pub outputs: Vec<PathBuf>,
    pub stats: Value,
}

impl Manifest {
    pub fn new(command: &str, config: &Config, overrides: &[String]) -> Self {
        Self {
            command: command.into(),
            tool_version: env!("CARGO_PKG_VERSION"),
            config: config.clone(),
            overrides: overrides.to_vec(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            stats: Value::Null,
        }
    }

    pub fn input(&mut self, path: &Path, bytes: &[u8]) {
        self.inputs.push(InputHash { path: path.to_path_buf(), sha256: hex::encode(Sha256::digest(bytes)) });
    }

    /// Writes `<artifact>.manifest.json` next to `artifact`.
    pub fn write_beside(&mut self, artifact: &Path) -> Result<PathBuf> {
        self.outputs.push(artifact.to_path_buf());
        let mut name = artifact.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = PathBuf::from(name);
        let body = serde_json::to_string_pretty(self)?;
        fs::write(&path, body + "\n").with_context(|| format!("cannot write {}", path.display()))?;
        Ok(path)
    }
}
