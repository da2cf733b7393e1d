//! Experiment configuration loaded from TOML.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use exposure_rppg::evaluate::EvalConfig;
use exposure_rppg::metrics::{SnrConfig, DEFAULT_TOLERANCE};
use exposure_rppg::presets;
use exposure_rppg::rppg::PipelineConfig;
use exposure_rppg::scene::ScenarioSpec;
use exposure_rppg::sensor::SensorConfig;
use exposure_rppg::strategy::ExposureStrategy;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};

/// Prefix selecting a scenario shipped with the library instead of a file.
pub const BUILTIN_PREFIX: &str = "builtin:";

fn default_strategies() -> Vec<ExposureStrategy> {
    ExposureStrategy::standard_set()
}
fn default_tolerance() -> f64 {
    DEFAULT_TOLERANCE
}
fn default_seeds() -> Vec<u64> {
    vec![0]
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Scenario file paths, relative to the config file, or `builtin:<name>`.
    pub scenarios: Vec<String>,
    #[serde(default = "default_strategies", rename = "strategy")]
    pub strategies: Vec<ExposureStrategy>,
    #[serde(default)]
    pub sensor: SensorConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub snr: SnrConfig,
    /// Success-rate tolerance, bpm.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Each seed replaces the scenario's noise seed.
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// Directory that relative scenario paths and `output_dir` resolve against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    /// Config over `scenarios` with every other field at its default.
    pub fn new(scenarios: Vec<String>) -> Self {
        Self {
            scenarios,
            strategies: default_strategies(),
            sensor: SensorConfig::default(),
            pipeline: PipelineConfig::default(),
            snr: SnrConfig::default(),
            tolerance: default_tolerance(),
            seeds: default_seeds(),
            output_dir: default_output_dir(),
            base_dir: PathBuf::from("."),
        }
    }

    pub fn from_toml_str(text: &str, base_dir: &Path) -> Result<Self> {
        let mut cfg: Self =
            toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.base_dir = base_dir.to_path_buf();
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::from_toml_str(&text, base).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig { pipeline: self.pipeline.clone(), snr: self.snr.clone(), tolerance: self.tolerance }
    }

    pub fn resolved_output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    /// Keeps only the named strategies.
    pub fn filter_strategies(&mut self, names: &[String]) -> Result<()> {
        if names.is_empty() {
            return Ok(());
        }
        if let Some(missing) = names.iter().find(|n| !self.strategies.iter().any(|s| &s.name == *n)) {
            return Err(HarnessError::Config(format!("unknown strategy '{missing}'")));
        }
        self.strategies.retain(|s| names.contains(&s.name));
        Ok(())
    }

    /// Checks everything except the scenario files themselves.
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(HarnessError::Config(m.into()));
        if self.scenarios.is_empty() {
            return fail("at least one scenario is required");
        }
        if self.strategies.is_empty() {
            return fail("at least one strategy is required");
        }
        if self.seeds.is_empty() {
            return fail("at least one seed is required");
        }
        if !(self.tolerance > 0.0 && self.tolerance.is_finite()) {
            return fail("tolerance must be a positive number");
        }
        let mut names = BTreeSet::new();
        for s in &self.strategies {
            if !names.insert(s.name.as_str()) {
                return Err(HarnessError::Config(format!("duplicate strategy name '{}'", s.name)));
            }
        }
        self.sensor.validate()?;
        self.pipeline.validate()?;
        for s in &self.strategies {
            s.validate(&self.sensor)?;
        }
        Ok(())
    }

    /// Loads every scenario, in config order, rejecting duplicate names.
    pub fn load_scenarios(&self) -> Result<Vec<ScenarioSpec>> {
        let mut names = BTreeSet::new();
        let mut out = Vec::with_capacity(self.scenarios.len());
        for entry in &self.scenarios {
            let spec = match entry.strip_prefix(BUILTIN_PREFIX) {
                Some(name) => presets::builtin(name)
                    .ok_or_else(|| {
                        HarnessError::Config(format!(
                            "unknown builtin scenario '{name}' (available: {})",
                            presets::BUILTIN_NAMES.join(", ")
                        ))
                    })?
                    .build()?,
                None => ScenarioSpec::from_path(self.base_dir.join(entry))?,
            };
            if !names.insert(spec.name.clone()) {
                return Err(HarnessError::Config(format!("duplicate scenario name '{}'", spec.name)));
            }
            out.push(spec);
        }
        Ok(out)
    }
}
