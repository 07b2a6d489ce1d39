use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::CliResult;

/// Record of one CLI run, written next to the outputs: the resolved
/// configuration plus SHA-256 digests of every file read and written.
/// Re-running the same command with the same inputs and seed reproduces
/// all digests; only the timestamps differ.
#[derive(Serialize)]
pub struct RunManifest {
    command: String,
    argv: Vec<String>,
    config: serde_json::Value,
    seed: u64,
    version: &'static str,
    started_unix_ms: u128,
    finished_unix_ms: u128,
    inputs: BTreeMap<String, String>,
    outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn start(command: &str, config: &impl Serialize, seed: u64) -> Self {
        RunManifest {
            command: command.to_string(),
            argv: std::env::args().collect(),
            config: serde_json::to_value(config).expect("config serializes"),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            started_unix_ms: unix_ms(),
            finished_unix_ms: 0,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    /// Digest an input file as it is read.
    pub fn add_input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs
            .insert(path.display().to_string(), sha256_file(path)?);
        Ok(())
    }

    /// Digest the written outputs and write the manifest itself to `path`.
    pub fn finish(mut self, outputs: &[PathBuf], path: &Path) -> CliResult<()> {
        for out in outputs {
            self.outputs
                .insert(out.display().to_string(), sha256_file(out)?);
        }
        self.finished_unix_ms = unix_ms();
        let mut text = serde_json::to_string_pretty(&self)?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }
}

/// Default manifest location for a single-file output.
pub fn manifest_path_for(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

fn sha256_file(path: &Path) -> std::io::Result<String> {
    Ok(hex::encode(Sha256::digest(std::fs::read(path)?)))
}

fn unix_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .expect("clock after 1970")
        .as_millis()
}
