use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use svr_core::output::write_atomic;

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to rerun a command; written before any computation.
#[derive(Debug, Serialize)]
pub struct RunManifest<C: Serialize> {
    pub command: String,
    pub argv: Vec<String>,
    pub config: C,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: Option<u64>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

pub fn sha256_file(path: &Path) -> Result<InputDigest> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let hex = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    Ok(InputDigest { path: path.to_path_buf(), sha256: hex })
}

impl<C: Serialize> RunManifest<C> {
    pub fn new(command: &str, config: C, seed: u64, inputs: Vec<InputDigest>) -> Self {
        Self {
            command: command.into(),
            argv: std::env::args().collect(),
            config,
            seed,
            inputs,
            version: env!("CARGO_PKG_VERSION").into(),
            started_unix: now(),
            finished_unix: None,
        }
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self)?;
        write_atomic(&dir.join("manifest.json"), &json)?;
        Ok(())
    }

    pub fn finish(&mut self, dir: &Path) -> Result<()> {
        self.finished_unix = Some(now());
        self.write(dir)
    }
}

pub fn create_out_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| svr_core::Error::Io { context: format!("creating {}", dir.display()), source: e })?;
    Ok(())
}
