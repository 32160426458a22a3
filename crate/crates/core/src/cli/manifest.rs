use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::KeyValues;
use crate::error::Result;
use crate::util::{file_digest, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// Reproducibility record written beside a run's primary output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config: BTreeMap<String, String>,
    pub seeds: BTreeMap<String, u64>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    /// Seconds since the Unix epoch at start.
    pub started_at: u64,
    pub wall_clock_seconds: f64,
}

/// `<output>.manifest.json`
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// Collects what a run reads and writes, then records it.
pub(crate) struct ManifestBuilder {
    subcommand: String,
    config: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
    inputs: Vec<FileDigest>,
    started_at: u64,
    clock: Instant,
}

impl ManifestBuilder {
    pub fn new(subcommand: &str) -> Self {
        ManifestBuilder {
            subcommand: subcommand.to_string(),
            config: BTreeMap::new(),
            seeds: BTreeMap::new(),
            inputs: Vec::new(),
            started_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            clock: Instant::now(),
        }
    }

    /// Digests an input now, before anything could touch it.
    pub fn input(&mut self, path: &Path) -> Result<()> {
        self.inputs.push(FileDigest {
            path: path.to_path_buf(),
            sha256: file_digest(path)?,
        });
        Ok(())
    }

    pub fn config(&mut self, key: impl Into<String>, value: impl ToString) {
        self.config.insert(key.into(), value.to_string());
    }

    pub fn config_section(&mut self, prefix: &str, kv: &KeyValues) {
        for (k, v) in kv.iter() {
            self.config.insert(format!("{prefix}.{k}"), v.to_string());
        }
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.to_string(), seed);
    }

    /// Writes the manifest beside `outputs[0]`.
    pub fn finish(self, outputs: &[&Path]) -> Result<RunManifest> {
        let outputs = outputs
            .iter()
            .map(|p| {
                Ok(FileDigest {
                    path: p.to_path_buf(),
                    sha256: file_digest(p)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            subcommand: self.subcommand,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            started_at: self.started_at,
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            outputs,
        };
        if let Some(primary) = manifest.outputs.first() {
            let text = serde_json::to_string_pretty(&manifest)?;
            write_atomic(&manifest_path(&primary.path), text.as_bytes())?;
        }
        Ok(manifest)
    }
}
