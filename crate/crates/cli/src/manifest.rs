//! Reproducibility record attached to every JSON report.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct InputFile {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunManifest {
    pub command_line: Vec<String>,
    pub subcommand: String,
    pub parameters: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub seed: Option<u64>,
    pub version: String,
    pub threads: usize,
    pub wall_time_s: f64,
}

/// Collects the manifest while a command runs.
pub struct Recorder {
    manifest: RunManifest,
    started: Instant,
}

impl Recorder {
    pub fn new(subcommand: &str, parameters: serde_json::Value) -> Self {
        Recorder {
            manifest: RunManifest {
                command_line: std::env::args().collect(),
                subcommand: subcommand.to_string(),
                parameters,
                inputs: Vec::new(),
                seed: None,
                version: env!("CARGO_PKG_VERSION").to_string(),
                threads: rayon::current_num_threads(),
                wall_time_s: 0.0,
            },
            started: Instant::now(),
        }
    }

    /// Reads a file and records its hash.
    pub fn read_input(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
        self.manifest.inputs.push(InputFile { path: path.to_path_buf(), sha256: sha256_hex(&bytes) });
        Ok(bytes)
    }

    /// Replaces the recorded parameters once they are known.
    pub fn with_parameters(mut self, parameters: serde_json::Value) -> Self {
        self.manifest.parameters = parameters;
        self
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.manifest.seed = Some(seed);
    }

    /// The manifest with the elapsed time filled in.
    pub fn finish(&self) -> RunManifest {
        RunManifest { wall_time_s: self.started.elapsed().as_secs_f64(), ..self.manifest.clone() }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
