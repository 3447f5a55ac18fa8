//! Run manifests: one JSON record per invocation, written atomically next to
//! the artifacts it describes.

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::error::CliResult;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub tool_version: String,
    pub duration_secs: f64,
}

/// `dir/stem.manifest.json` for an artifact `dir/stem.ext`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    artifact.with_extension("manifest.json")
}

pub struct Recorder {
    command: &'static str,
    started: Instant,
}

impl Recorder {
    pub fn start(command: &'static str) -> Self {
        Recorder {
            command,
            started: Instant::now(),
        }
    }

    /// Writes the manifest next to `primary`. All `outputs` share its stem.
    pub fn finish<C: Serialize>(
        self,
        config: &C,
        seed: Option<u64>,
        inputs: Vec<PathBuf>,
        primary: &Path,
        outputs: Vec<PathBuf>,
    ) -> CliResult<PathBuf> {
        let m = RunManifest {
            command: self.command.to_string(),
            config: serde_json::to_value(config)?,
            seed,
            inputs,
            outputs,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            duration_secs: self.started.elapsed().as_secs_f64(),
        };
        let path = manifest_path(primary);
        let mut text = serde_json::to_string_pretty(&m)?;
        text.push('\n');
        pbgc::write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
