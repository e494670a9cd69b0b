use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Result;
use rarepool_core::io::write_json_atomically;
use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Record of one command invocation, written beside its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub toolkit_version: String,
    pub config: Value,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub rng_seeds: Vec<u64>,
    pub duration_seconds: f64,
    #[serde(default, skip_serializing_if = "Value::is_null")]
    pub summary: Value,
}

#[derive(Debug)]
pub struct ManifestBuilder {
    manifest: RunManifest,
    started: Instant,
}

impl ManifestBuilder {
    pub fn start(command: &str, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            manifest: RunManifest {
                command: command.to_string(),
                toolkit_version: env!("CARGO_PKG_VERSION").to_string(),
                config: serde_json::to_value(config)?,
                inputs: Vec::new(),
                outputs: Vec::new(),
                rng_seeds: Vec::new(),
                duration_seconds: 0.0,
                summary: Value::Null,
            },
            started: Instant::now(),
        })
    }

    pub fn input(&mut self, path: &Path) -> &mut Self {
        self.manifest.inputs.push(path.to_path_buf());
        self
    }

    pub fn output(&mut self, path: &Path) -> &mut Self {
        self.manifest.outputs.push(path.to_path_buf());
        self
    }

    pub fn seeds(&mut self, seeds: impl IntoIterator<Item = u64>) -> &mut Self {
        self.manifest.rng_seeds.extend(seeds);
        self
    }

    pub fn summary(&mut self, summary: &impl Serialize) -> Result<&mut Self> {
        self.manifest.summary = serde_json::to_value(summary)?;
        Ok(self)
    }

    pub fn write(&mut self, path: &Path) -> Result<RunManifest> {
        self.manifest.duration_seconds = self.started.elapsed().as_secs_f64();
        write_json_atomically(path, &self.manifest)?;
        Ok(self.manifest.clone())
    }
}

/// `out.jsonl` → `out.jsonl.manifest.json`.
pub fn manifest_beside(output: &Path) -> PathBuf {
    let mut name = output.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}
