//! Run manifests: what a command read, what it wrote, and checksums of both.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sprl_core::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: PathBuf,
    pub sha256: String,
    pub bytes: u64,
}

impl FileRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            sha256: hex::encode(Sha256::digest(&data)),
            bytes: data.len() as u64,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    /// Resolved `key = value` settings, when the command trains.
    pub config: Option<String>,
    pub seeds: Vec<u64>,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_secs: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.into(),
            arguments: std::env::args().skip(1).collect(),
            config: None,
            seeds: Vec::new(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            wall_time_secs: 0.0,
        }
    }

    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> Result<()> {
        self.outputs.push(FileRecord::of(path)?);
        Ok(())
    }

    pub fn finish(mut self, path: &Path, elapsed: Duration) -> Result<()> {
        self.wall_time_secs = elapsed.as_secs_f64();
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: bad manifest: {e}", path.display())))
    }

    /// Files whose current checksum differs from the recorded one.
    pub fn stale(&self) -> Vec<PathBuf> {
        self.inputs
            .iter()
            .chain(&self.outputs)
            .filter(|r| FileRecord::of(&r.path).map_or(true, |now| now.sha256 != r.sha256))
            .map(|r| r.path.clone())
            .collect()
    }
}
