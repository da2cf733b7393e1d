//! Scenario × strategy × seed cells, evaluated on a worker pool.

use exposure_rppg::evaluate::{evaluate, Evaluation};
use exposure_rppg::scene::ScenarioSpec;
use exposure_rppg::strategy::output_rate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

/// Summary row of one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub scenario: String,
    pub strategy: String,
    pub seed: u64,
    pub duration_s: f64,
    /// Output stream rate, Hz.
    pub frame_rate_hz: f64,
    pub frames: usize,
    pub windows: usize,
    pub mae_bpm: f64,
    pub success_rate_pct: f64,
    pub snr_db: f64,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub summary: CellSummary,
    pub evaluation: Evaluation,
}

impl CellResult {
    /// File-system-safe identifier.
    pub fn slug(&self) -> String {
        cell_slug(&self.summary.scenario, &self.summary.strategy, self.summary.seed)
    }
}

pub fn cell_slug(scenario: &str, strategy: &str, seed: u64) -> String {
    let clean = |s: &str| {
        s.chars()
            .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
            .collect::<String>()
    };
    format!("{}__{}__s{seed}", clean(scenario), clean(strategy))
}

/// Runs every cell. Results come back in scenario, strategy, seed order regardless of
/// scheduling.
pub fn run_cells(cfg: &ExperimentConfig, scenarios: &[ScenarioSpec]) -> Result<Vec<CellResult>> {
    let eval_cfg = cfg.eval_config();
    let jobs: Vec<(usize, usize, u64)> = (0..scenarios.len())
        .flat_map(|i| {
            (0..cfg.strategies.len()).flat_map(move |j| cfg.seeds.iter().map(move |&s| (i, j, s)))
        })
        .collect();
    let results: Vec<Result<CellResult>> = jobs
        .par_iter()
        .map(|&(i, j, seed)| {
            let mut spec = scenarios[i].clone();
            spec.noise_seed = seed;
            let strategy = &cfg.strategies[j];
            let evaluation = evaluate(&spec, strategy, &cfg.sensor, &eval_cfg).map_err(|e| {
                HarnessError::from(e).with_context(&format!("{} / {} / seed {seed}", spec.name, strategy.name))
            })?;
            let m = &evaluation.metrics;
            let summary = CellSummary {
                scenario: spec.name.clone(),
                strategy: strategy.name.clone(),
                seed,
                duration_s: spec.duration,
                frame_rate_hz: output_rate(&spec),
                frames: evaluation.run.frames.len(),
                windows: evaluation.pulse.hr.len(),
                mae_bpm: m.mae,
                success_rate_pct: m.success_rate,
                snr_db: m.snr,
            };
            check_finite(&summary, &evaluation)?;
            Ok(CellResult { summary, evaluation })
        })
        .collect();
    results.into_iter().collect()
}

fn check_finite(summary: &CellSummary, ev: &Evaluation) -> Result<()> {
    let cell = cell_slug(&summary.scenario, &summary.strategy, summary.seed);
    if !ev.metrics.is_finite() {
        return Err(HarnessError::Invariant(format!("non-finite metric in cell {cell}")));
    }
    let log_ok = ev.run.log.iter().all(|r| {
        r.exposure_ms.is_finite() && r.mu_roi.is_finite() && r.mu_fullframe.is_finite()
    });
    let wave_ok = ev.pulse.wave.samples.iter().all(|v| v.is_finite());
    let cycles_ok = ev.run.cycles.iter().all(|c| c.t_opt.is_finite() && c.mu_opt.is_finite());
    if !(log_ok && wave_ok && cycles_ok) {
        return Err(HarnessError::Invariant(format!("non-finite log value in cell {cell}")));
    }
    Ok(())
}

impl HarnessError {
    fn with_context(self, ctx: &str) -> Self {
        match self {
            Self::Config(m) => Self::Config(format!("{ctx}: {m}")),
            Self::Runtime(m) => Self::Runtime(format!("{ctx}: {m}")),
            Self::Invariant(m) => Self::Invariant(format!("{ctx}: {m}")),
            io @ Self::Io { .. } => io,
        }
    }
}
