//! Strategy run, pulse extraction and scoring for one scenario.

use crate::error::Result;
use crate::metrics::{MetricsReport, SnrConfig};
use crate::rppg::{run_pipeline, HrSeries, PipelineConfig, PipelineOutput};
use crate::scene::ScenarioSpec;
use crate::sensor::SensorConfig;
use crate::strategy::{run_strategy, ExposureStrategy, StrategyRun};

/// Ground-truth heart rate sampled at `timestamps`.
pub fn reference_series(spec: &ScenarioSpec, timestamps: &[f64]) -> Result<HrSeries> {
    let pairs = timestamps
        .iter()
        .map(|&t| Ok((t, spec.ground_truth_hr(t.min(spec.duration))?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(HrSeries::from_pairs(pairs))
}

#[derive(Debug, Clone)]
pub struct Evaluation {
    pub run: StrategyRun,
    pub pulse: PipelineOutput,
    pub reference: HrSeries,
    pub metrics: MetricsReport,
}

/// Scoring knobs shared by every cell of an experiment.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalConfig {
    pub pipeline: PipelineConfig,
    pub snr: SnrConfig,
    /// Success-rate tolerance, bpm.
    pub tolerance: f64,
}

impl EvalConfig {
    pub fn standard() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            snr: SnrConfig::default(),
            tolerance: crate::metrics::DEFAULT_TOLERANCE,
        }
    }
}

pub fn evaluate(
    spec: &ScenarioSpec,
    strategy: &ExposureStrategy,
    sensor: &SensorConfig,
    cfg: &EvalConfig,
) -> Result<Evaluation> {
    let run = run_strategy(strategy, spec, sensor)?;
    let pulse = run_pipeline(&run.frames, &spec.roi, &cfg.pipeline)?;
    let timestamps: Vec<f64> = run.frames.iter().map(|f| f.timestamp).collect();
    let reference = reference_series(spec, &timestamps)?;
    let metrics = MetricsReport::compute(&pulse.hr, &reference, &pulse.wave, cfg.tolerance, &cfg.snr)?;
    Ok(Evaluation { run, pulse, reference, metrics })
}
