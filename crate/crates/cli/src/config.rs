//! Experiment configuration. Unknown keys are rejected so that a typo never
//! silently falls back to a default.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sysid::active::AcquisitionConfig;
use sysid::features::LibraryMode;
use sysid::identify::FitConfig;
use sysid::scenario::{BurgersPoolSpec, LotkaVolterraPoolSpec, Scenario};

use crate::CliError;

/// A measured dataset on disk instead of a simulated benchmark.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalData {
    pub path: PathBuf,
    pub format: DataFormat,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
    /// Labels of the state columns; defaults to the CSV header.
    #[serde(default)]
    pub state_names: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    /// `t,x1,...,xd` on a time grid.
    Trajectory,
    /// `t,x,u` in long format on a time × space grid.
    Field,
}

fn default_degree() -> u32 {
    2
}

/// Candidate pool of an active-learning run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PoolSource {
    LotkaVolterra(LotkaVolterraPoolSpec),
    Burgers(BurgersPoolSpec),
    /// Pool features and measured derivatives read from two CSV files with
    /// one row per candidate.
    External(ExternalPool),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExternalPool {
    /// States (`mode = "ode"`) or `u,u_x,u_xx` (`mode = "pde"`).
    pub pool: PathBuf,
    /// Measured time derivatives, row `i` belonging to pool row `i`.
    pub derivatives: PathBuf,
    pub mode: LibraryMode,
    #[serde(default = "default_degree")]
    pub max_degree: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ActiveSection {
    pub pool: PoolSource,
    #[serde(default)]
    pub acquisition: AcquisitionConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub thresholds: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self { thresholds: (1..=12).map(|k| k as f64 / 10.0).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub scenario: Option<Scenario>,
    #[serde(default)]
    pub data: Option<ExternalData>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub active: Option<ActiveSection>,
}

/// Dataset source of `simulate`, `fit` and `sweep`.
pub enum Source<'a> {
    Scenario(&'a Scenario),
    External(&'a ExternalData),
}

impl ExperimentConfig {
    /// Parses TOML, or the `config` member of a run manifest when the file
    /// ends in `.json`. Relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read {}: {e}", path.display())))?;
        let mut config: ExperimentConfig = if path.extension().is_some_and(|e| e == "json") {
            let manifest: serde_json::Value =
                serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
            let inner = manifest
                .get("config")
                .cloned()
                .ok_or_else(|| CliError::config(format!("{} has no config member", path.display())))?;
            serde_json::from_value(inner).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        } else {
            toml::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?
        };
        let base = path.parent().unwrap_or(Path::new(""));
        config.resolve_paths(base);
        config.check_files()?;
        Ok(config)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            let joined = base.join(&*p);
            *p = std::path::absolute(&joined).unwrap_or(joined);
        };
        if let Some(d) = &mut self.data {
            fix(&mut d.path);
        }
        if let Some(ActiveSection { pool: PoolSource::External(p), .. }) = &mut self.active {
            fix(&mut p.pool);
            fix(&mut p.derivatives);
        }
        if let Some(out) = &mut self.out {
            fix(out);
        }
    }

    fn check_files(&self) -> Result<(), CliError> {
        let mut files = Vec::new();
        if let Some(d) = &self.data {
            files.push(&d.path);
        }
        if let Some(ActiveSection { pool: PoolSource::External(p), .. }) = &self.active {
            files.extend([&p.pool, &p.derivatives]);
        }
        match files.into_iter().find(|f| !f.is_file()) {
            Some(f) => Err(CliError::config(format!("referenced file {} does not exist", f.display()))),
            None => Ok(()),
        }
    }

    pub fn source(&self) -> Result<Source<'_>, CliError> {
        match (&self.scenario, &self.data) {
            (Some(s), None) => Ok(Source::Scenario(s)),
            (None, Some(d)) => Ok(Source::External(d)),
            (Some(_), Some(_)) => Err(CliError::config("set either [scenario] or [data], not both")),
            (None, None) => Err(CliError::config("missing [scenario] or [data] section")),
        }
    }

    pub fn active(&self) -> Result<&ActiveSection, CliError> {
        self.active.as_ref().ok_or_else(|| CliError::config("missing [active] section"))
    }
}
