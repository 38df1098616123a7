//! Run manifest: what was run, with which seeds, and what it wrote.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;
use sysid::io::write_json;

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'static str,
    /// Fully resolved configuration, defaults included.
    pub config: ExperimentConfig,
    pub seeds: BTreeMap<String, u64>,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    pub artifacts: Vec<String>,
}

/// Collects artifacts during a run and writes the manifest at the end.
pub struct Run {
    command: &'static str,
    config: ExperimentConfig,
    pub out: PathBuf,
    seeds: BTreeMap<String, u64>,
    artifacts: Vec<String>,
    started: SystemTime,
    clock: Instant,
    quiet: bool,
}

impl Run {
    pub fn new(command: &'static str, config: ExperimentConfig, out: PathBuf, quiet: bool) -> Result<Self, CliError> {
        std::fs::create_dir_all(&out)
            .map_err(|e| CliError::data(format!("cannot create output directory {}: {e}", out.display())))?;
        Ok(Self {
            command,
            config,
            out,
            seeds: BTreeMap::new(),
            artifacts: Vec::new(),
            started: SystemTime::now(),
            clock: Instant::now(),
            quiet,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn seed(&mut self, stage: &str, seed: u64) {
        self.seeds.insert(stage.to_string(), seed);
    }

    pub fn log(&self, message: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", message.as_ref());
        }
    }

    /// Path of an artifact inside the run directory, recorded in the manifest.
    pub fn artifact(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.out.join(name)
    }

    pub fn finish(self) -> Result<(), CliError> {
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            started_unix: self.started.duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            wall_clock_seconds: self.clock.elapsed().as_secs_f64(),
            artifacts: self.artifacts,
        };
        let path = manifest_path(&self.out);
        write_json(&path, &manifest).map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
        if !self.quiet {
            eprintln!("wrote {}", path.display());
        }
        Ok(())
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    out.join("manifest.json")
}
