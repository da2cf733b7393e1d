//! Experiment runner: loads scenarios and strategies, evaluates every
//! scenario × strategy × seed cell, and writes reports and plot data.

pub mod config;
pub mod error;
pub mod experiment;
pub mod plot;
pub mod report;

use std::path::Path;

use exposure_rppg::controller::ControllerConfig;
use exposure_rppg::fusion::FusionConfig;
use exposure_rppg::presets::DEMO_NAMES;
use exposure_rppg::strategy::ExposureStrategy;

pub use config::ExperimentConfig;
pub use error::{HarnessError, Result};
pub use report::Summary;

/// Validates, runs and writes the report under `out`.
pub fn run_experiment(cfg: &ExperimentConfig, out: &Path) -> Result<Summary> {
    cfg.validate()?;
    let scenarios = cfg.load_scenarios()?;
    let cells = experiment::run_cells(cfg, &scenarios)?;
    report::write_report(out, cfg, &cells)
}

/// The four demo scenarios against the standard set plus adaptive with fusion.
pub fn demo_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(
        DEMO_NAMES.iter().map(|n| format!("{}{n}", config::BUILTIN_PREFIX)).collect(),
    );
    cfg.strategies.push(ExposureStrategy::adaptive_merf(
        "adaptive_merf",
        ControllerConfig::default(),
        FusionConfig::default(),
    ));
    cfg.sensor = cfg.sensor.with_noise(1.0);
    cfg.output_dir = "demo-results".into();
    cfg
}
