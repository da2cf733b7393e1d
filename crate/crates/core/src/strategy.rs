//! Exposure strategies that produce a 15 Hz output stream from a scenario.

use serde::{Deserialize, Serialize};

use crate::controller::{run_cycle, ControllerConfig, ControllerState, CycleRecord};
use crate::error::{config, Error, Result};
use crate::fusion::{fuse, FusionConfig};
use crate::scene::ScenarioSpec;
use crate::sensor::{capture, Frame, SensorConfig, StreamTag};

/// Longest exposure that fits one 15 fps slot.
pub const AUTO_T_MAX_MS: f64 = 1000.0 / 15.0;

fn default_auto_target() -> f64 {
    128.0
}
fn default_step_gain() -> f64 {
    0.3
}
fn default_auto_initial() -> f64 {
    10.0
}
fn default_auto_t_max() -> f64 {
    AUTO_T_MAX_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrategyKind {
    Fixed {
        exposure_ms: f64,
    },
    /// Full-frame mid-gray metering with a proportional multiplicative update.
    AutoFullframe {
        #[serde(default = "default_auto_target")]
        target: f64,
        #[serde(default = "default_step_gain")]
        step_gain: f64,
        #[serde(default = "default_auto_initial")]
        initial_ms: f64,
        #[serde(default = "default_auto_t_max")]
        t_max_ms: f64,
    },
    AdaptiveTriplet {
        #[serde(default)]
        controller: ControllerConfig,
    },
    AdaptiveTripletMerf {
        #[serde(default)]
        controller: ControllerConfig,
        #[serde(default)]
        fusion: FusionConfig,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExposureStrategy {
    pub name: String,
    #[serde(flatten)]
    pub kind: StrategyKind,
}

impl ExposureStrategy {
    pub fn fixed(name: &str, exposure_ms: f64) -> Self {
        Self { name: name.into(), kind: StrategyKind::Fixed { exposure_ms } }
    }

    pub fn auto_fullframe(name: &str) -> Self {
        Self {
            name: name.into(),
            kind: StrategyKind::AutoFullframe {
                target: default_auto_target(),
                step_gain: default_step_gain(),
                initial_ms: default_auto_initial(),
                t_max_ms: default_auto_t_max(),
            },
        }
    }

    pub fn adaptive(name: &str, controller: ControllerConfig) -> Self {
        Self { name: name.into(), kind: StrategyKind::AdaptiveTriplet { controller } }
    }

    pub fn adaptive_merf(name: &str, controller: ControllerConfig, fusion: FusionConfig) -> Self {
        Self { name: name.into(), kind: StrategyKind::AdaptiveTripletMerf { controller, fusion } }
    }

    /// The four-way comparison set: fixed short and long, full-frame auto, adaptive.
    pub fn standard_set() -> Vec<Self> {
        vec![
            Self::fixed("fixed_short", 8.0),
            Self::fixed("fixed_long", 22.0),
            Self::auto_fullframe("auto_fullframe"),
            Self::adaptive("adaptive", ControllerConfig::default()),
        ]
    }

    pub fn validate(&self, sensor: &SensorConfig) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(config("strategy name must not be empty"));
        }
        match &self.kind {
            StrategyKind::Fixed { exposure_ms } => sensor
                .check_exposure(*exposure_ms)
                .map_err(|_| config(format!("strategy {}: fixed exposure outside sensor bounds", self.name))),
            StrategyKind::AutoFullframe { target, step_gain, initial_ms, t_max_ms } => {
                if !(*target > 0.0 && *target < sensor.i_max()) {
                    return Err(config(format!("strategy {}: auto target must lie in (0, i_max)", self.name)));
                }
                if !(*step_gain > 0.0 && *step_gain <= 1.0) {
                    return Err(config(format!("strategy {}: step gain must lie in (0, 1]", self.name)));
                }
                if !(*t_max_ms > sensor.t_min && *initial_ms >= sensor.t_min && initial_ms <= t_max_ms) {
                    return Err(config(format!("strategy {}: auto exposure bounds are inconsistent", self.name)));
                }
                Ok(())
            }
            StrategyKind::AdaptiveTriplet { controller } => controller.validate(sensor.i_max()),
            StrategyKind::AdaptiveTripletMerf { controller, fusion } => {
                controller.validate(sensor.i_max())?;
                fusion.validate(sensor.i_max())
            }
        }
    }
}

/// `T · (1 + g·(target - mean)/target)` clamped to `[t_min, t_max]`.
pub fn next_exposure_auto(
    prev_ms: f64,
    fullframe_mean: f64,
    target: f64,
    step_gain: f64,
    t_min: f64,
    t_max: f64,
) -> f64 {
    (prev_ms * (1.0 + step_gain * (target - fullframe_mean) / target)).clamp(t_min, t_max)
}

/// One row of the per-frame log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameLogRow {
    pub t: f64,
    pub strategy: String,
    pub exposure_ms: f64,
    pub mu_roi: f64,
    pub mu_fullframe: f64,
    pub saturated_patch_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyRun {
    /// Output stream at `cycle_rate / 3`.
    pub frames: Vec<Frame>,
    pub log: Vec<FrameLogRow>,
    /// Controller records (adaptive strategies only).
    pub cycles: Vec<CycleRecord>,
}

/// Number of output frames for a scenario.
pub fn frame_count(spec: &ScenarioSpec) -> usize {
    (spec.duration * output_rate(spec) + 1e-9).floor() as usize
}

/// Output stream rate: one frame per triplet.
pub fn output_rate(spec: &ScenarioSpec) -> f64 {
    spec.cycle_rate / 3.0
}

/// Runs a strategy over the whole scenario.
pub fn run_strategy(
    strategy: &ExposureStrategy,
    spec: &ScenarioSpec,
    sensor: &SensorConfig,
) -> Result<StrategyRun> {
    strategy.validate(sensor).map_err(|e| match e {
        Error::Config(m) => Error::Precondition(m),
        other => other,
    })?;
    let n = frame_count(spec);
    let rate = output_rate(spec);
    let mut frames = Vec::with_capacity(n);
    let mut cycles = Vec::new();
    match &strategy.kind {
        StrategyKind::Fixed { exposure_ms } => {
            for i in 0..n {
                frames.push(capture(spec, sensor, i as f64 / rate, *exposure_ms, StreamTag::Fixed)?);
            }
        }
        StrategyKind::AutoFullframe { target, step_gain, initial_ms, t_max_ms } => {
            let auto_sensor = sensor.clone().with_t_max(*t_max_ms);
            let mut exposure = *initial_ms;
            for i in 0..n {
                let f = capture(spec, &auto_sensor, i as f64 / rate, exposure, StreamTag::Auto)?;
                exposure = next_exposure_auto(
                    exposure,
                    f.fullframe_mean(),
                    *target,
                    *step_gain,
                    auto_sensor.t_min,
                    *t_max_ms,
                );
                frames.push(f);
            }
        }
        StrategyKind::AdaptiveTriplet { controller } | StrategyKind::AdaptiveTripletMerf { controller, .. } => {
            let fusion = match &strategy.kind {
                StrategyKind::AdaptiveTripletMerf { fusion, .. } => Some(fusion),
                _ => None,
            };
            let mut state = ControllerState::new(controller);
            for i in 0..n {
                let cycle = run_cycle(&mut state, spec, sensor, controller, i as f64 / rate)?;
                let out = match fusion {
                    Some(f) => fuse(&cycle.frame_low, &cycle.frame_high, &cycle.frame_opt, f)?,
                    None => cycle.frame_opt,
                };
                cycles.push(cycle.record);
                frames.push(out);
            }
        }
    }
    let log = frames
        .iter()
        .map(|f| {
            Ok(FrameLogRow {
                t: f.timestamp,
                strategy: strategy.name.clone(),
                exposure_ms: f.exposure_ms,
                mu_roi: f.roi_mean(&spec.roi)?,
                mu_fullframe: f.fullframe_mean(),
                saturated_patch_count: f.saturated_count(&spec.roi),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(StrategyRun { frames, log, cycles })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{IlluminationField, PatchGrid, Roi, ScenarioFile, SkinFile};

    fn scene(level: f64, duration: f64) -> ScenarioSpec {
        ScenarioFile {
            name: "s".into(),
            duration,
            cycle_rate: 45.0,
            noise_seed: 0,
            grid: PatchGrid::new(4, 4),
            roi: Roi::rect(1, 1, 2, 2),
            illumination: IlluminationField::constant(level),
            skin: SkinFile::default(),
        }
        .build()
        .unwrap()
    }

    #[test]
    fn auto_law_examples() {
        assert_eq!(next_exposure_auto(10.0, 128.0, 128.0, 0.3, 0.1, AUTO_T_MAX_MS), 10.0);
        assert!((next_exposure_auto(10.0, 64.0, 128.0, 0.3, 0.1, AUTO_T_MAX_MS) - 11.5).abs() < 1e-12);
        assert_eq!(next_exposure_auto(60.0, 0.0, 128.0, 0.3, 0.1, AUTO_T_MAX_MS), AUTO_T_MAX_MS);
        assert_eq!(next_exposure_auto(0.1, 255.0, 128.0, 0.3, 0.1, AUTO_T_MAX_MS), 0.1);
    }

    #[test]
    fn every_strategy_emits_the_frame_count() {
        let spec = scene(40.0, 3.0);
        let sensor = SensorConfig::default();
        let mut all = ExposureStrategy::standard_set();
        all.push(ExposureStrategy::adaptive_merf("merf", ControllerConfig::default(), FusionConfig::default()));
        for s in &all {
            let run = run_strategy(s, &spec, &sensor).unwrap();
            assert_eq!(run.frames.len(), 45, "{}", s.name);
            assert_eq!(run.log.len(), 45);
            assert!(run.frames.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
            if let StrategyKind::Fixed { exposure_ms } = s.kind {
                assert!(run.frames.iter().all(|f| f.exposure_ms == exposure_ms));
            }
        }
    }

    #[test]
    fn fixed_long_saturates_bright_scene() {
        // face 0.5 · 60 = 30 codes/ms
        let spec = scene(60.0, 2.0);
        let sensor = SensorConfig::default();
        let short = run_strategy(&ExposureStrategy::fixed("s", 8.0), &spec, &sensor).unwrap();
        let long = run_strategy(&ExposureStrategy::fixed("l", 22.0), &spec, &sensor).unwrap();
        assert!(short.log.iter().all(|r| r.saturated_patch_count == 0));
        assert!(long.log.iter().all(|r| r.mu_roi >= 250.0));
    }

    #[test]
    fn auto_overexposes_face_on_dark_background() {
        let spec = scene(40.0, 6.0);
        let run = run_strategy(&ExposureStrategy::auto_fullframe("a"), &spec, &SensorConfig::default()).unwrap();
        let last = run.log.last().unwrap();
        assert!(last.mu_roi >= 250.0, "{last:?}");
        assert!(run.frames.iter().all(|f| f.exposure_ms <= AUTO_T_MAX_MS));
    }

    #[test]
    fn fixed_outside_bounds_is_rejected() {
        let spec = scene(40.0, 1.0);
        let s = ExposureStrategy::fixed("x", 30.0);
        assert!(matches!(run_strategy(&s, &spec, &SensorConfig::default()), Err(Error::Precondition(_))));
    }

    #[test]
    fn strategy_toml_shape() {
        let s: ExposureStrategy = toml::from_str("name = \"a\"\nkind = \"auto_fullframe\"\n").unwrap();
        assert_eq!(s, ExposureStrategy::auto_fullframe("a"));
        let s: ExposureStrategy =
            toml::from_str("name = \"f\"\nkind = \"fixed\"\nexposure_ms = 8.0\n").unwrap();
        assert_eq!(s, ExposureStrategy::fixed("f", 8.0));
    }
}
