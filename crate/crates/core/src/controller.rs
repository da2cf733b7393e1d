//! Triplet-frame adaptive exposure control.
//!
//! Each cycle captures a short exposure `T_l`, a long exposure `T_h`, fits the linear
//! exposure-to-intensity response `I = k·T + b` over the sample buffer, inverts it for
//! the target intensity and captures the third frame at `T_opt`.
//!
//! Clipped samples (any ROI code at `i_max`) carry only a lower bound on the response.
//! While the newest pair is unclipped the fit is least squares over the unclipped
//! buffer. Otherwise the controller fits a proportional response `I = k·T` through the
//! unclipped buffer samples and the previous optimal frame, or, when every sample is
//! clipped, takes the largest slope bound so the next cycle shortens the exposure.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::scene::ScenarioSpec;
use crate::sensor::{capture, Frame, SensorConfig, StreamTag};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExposureSample {
    /// Milliseconds.
    pub exposure: f64,
    /// Mean ROI code.
    pub intensity: f64,
    /// Seconds.
    pub timestamp: f64,
    /// Some ROI code reached `i_max`.
    #[serde(default)]
    pub clipped: bool,
}

impl ExposureSample {
    pub fn new(exposure: f64, intensity: f64) -> Self {
        Self { exposure, intensity, timestamp: 0.0, clipped: false }
    }

    fn from_frame(frame: &Frame, spec: &ScenarioSpec) -> Result<Self> {
        Ok(Self {
            exposure: frame.exposure_ms,
            intensity: frame.roi_mean(&spec.roi)?,
            timestamp: frame.timestamp,
            clipped: frame.saturated_count(&spec.roi) > 0,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Codes per ms.
    pub k: f64,
    /// Codes.
    pub b: f64,
}

impl LinearFit {
    pub fn predict(&self, exposure: f64) -> f64 {
        self.k * exposure + self.b
    }
}

fn default_target() -> f64 {
    140.0
}
fn default_capacity() -> usize {
    2
}
fn default_t_min() -> f64 {
    0.1
}
fn default_t_max() -> f64 {
    22.2
}
fn default_low_factor() -> f64 {
    0.5
}
fn default_high_factor() -> f64 {
    1.5
}
fn default_low_bounds() -> [f64; 2] {
    [5.0, 10.0]
}
fn default_high_bounds() -> [f64; 2] {
    [15.0, 22.0]
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_residual() -> f64 {
    20.0
}
fn default_initial_bracket() -> [f64; 2] {
    [8.0, 16.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    #[serde(default = "default_target")]
    pub i_target: f64,
    /// Maximum number of samples kept in the rolling buffer.
    #[serde(default = "default_capacity")]
    pub buffer_capacity: usize,
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_low_factor")]
    pub bracket_low_factor: f64,
    #[serde(default = "default_high_factor")]
    pub bracket_high_factor: f64,
    /// Allowed `T_l` range, ms.
    #[serde(default = "default_low_bounds")]
    pub low_bounds: [f64; 2],
    /// Allowed `T_h` range, ms.
    #[serde(default = "default_high_bounds")]
    pub high_bounds: [f64; 2],
    #[serde(default = "default_epsilon")]
    pub slope_epsilon: f64,
    #[serde(default = "default_residual")]
    pub outlier_residual: f64,
    /// `(T_l, T_h)` used before the first fit.
    #[serde(default = "default_initial_bracket")]
    pub initial_bracket: [f64; 2],
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            i_target: default_target(),
            buffer_capacity: default_capacity(),
            t_min: default_t_min(),
            t_max: default_t_max(),
            bracket_low_factor: default_low_factor(),
            bracket_high_factor: default_high_factor(),
            low_bounds: default_low_bounds(),
            high_bounds: default_high_bounds(),
            slope_epsilon: default_epsilon(),
            outlier_residual: default_residual(),
            initial_bracket: default_initial_bracket(),
        }
    }
}

impl ControllerConfig {
    pub fn with_capacity(mut self, n: usize) -> Self {
        self.buffer_capacity = n;
        self
    }

    pub fn validate(&self, i_max: f64) -> Result<()> {
        if !(self.i_target > 0.0 && self.i_target < i_max) {
            return Err(config("controller target must lie in (0, i_max)"));
        }
        if self.buffer_capacity < 2 {
            return Err(config("controller buffer capacity must be >= 2"));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(config("controller exposure bounds must satisfy 0 < t_min < t_max"));
        }
        if !(self.bracket_low_factor > 0.0
            && self.bracket_low_factor < 1.0
            && self.bracket_high_factor > 1.0
            && self.bracket_high_factor.is_finite())
        {
            return Err(config("bracket factors must satisfy 0 < low < 1 < high"));
        }
        for (name, [lo, hi]) in [("low", self.low_bounds), ("high", self.high_bounds)] {
            if !(lo <= hi && lo >= self.t_min && hi <= self.t_max) {
                return Err(config(format!(
                    "{name} bracket bounds must be ordered and within [t_min, t_max]"
                )));
            }
        }
        let [l, h] = self.initial_bracket;
        if !(l < h && l >= self.t_min && h <= self.t_max) {
            return Err(config("initial bracket must be ordered and within [t_min, t_max]"));
        }
        if !(self.slope_epsilon > 0.0 && self.outlier_residual > 0.0) {
            return Err(config("slope epsilon and outlier residual must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    /// Capture-ordered samples, oldest first.
    pub buffer: VecDeque<ExposureSample>,
    /// `(T_l, T_h)` for the next cycle.
    pub bracket: (f64, f64),
    pub last_fit: Option<LinearFit>,
    pub last_t_opt: Option<f64>,
    /// The most recent optimal-frame measurement.
    pub last_opt: Option<ExposureSample>,
    pub cycles: usize,
}

impl ControllerState {
    pub fn new(cfg: &ControllerConfig) -> Self {
        Self {
            buffer: VecDeque::with_capacity(cfg.buffer_capacity + 2),
            bracket: (cfg.initial_bracket[0], cfg.initial_bracket[1]),
            last_fit: None,
            last_t_opt: None,
            last_opt: None,
            cycles: 0,
        }
    }
}

fn check_slope(k: f64, epsilon: f64) -> Result<()> {
    if !k.is_finite() || k.abs() < epsilon {
        return Err(Error::FlatResponse { slope: k, epsilon });
    }
    Ok(())
}

/// Line through two samples.
pub fn fit_two_point(
    low: &ExposureSample,
    high: &ExposureSample,
    slope_epsilon: f64,
) -> Result<LinearFit> {
    if low.exposure == high.exposure {
        return Err(Error::DegenerateAbscissa { exposure: low.exposure });
    }
    let k = (high.intensity - low.intensity) / (high.exposure - low.exposure);
    check_slope(k, slope_epsilon)?;
    Ok(LinearFit { k, b: low.intensity - k * low.exposure })
}

/// Ordinary least squares over the samples.
pub fn fit_least_squares(samples: &[ExposureSample], slope_epsilon: f64) -> Result<LinearFit> {
    if samples.len() < 2 {
        return Err(crate::error::domain("least-squares fit needs at least two samples"));
    }
    let first = samples[0].exposure;
    if samples.iter().all(|s| s.exposure == first) {
        return Err(Error::DegenerateAbscissa { exposure: first });
    }
    if samples.len() == 2 {
        return fit_two_point(&samples[0], &samples[1], slope_epsilon);
    }
    let n = samples.len() as f64;
    let (mut st, mut si, mut stt, mut sti) = (0.0, 0.0, 0.0, 0.0);
    for s in samples {
        st += s.exposure;
        si += s.intensity;
        stt += s.exposure * s.exposure;
        sti += s.exposure * s.intensity;
    }
    let k = (n * sti - st * si) / (n * stt - st * st);
    check_slope(k, slope_epsilon)?;
    Ok(LinearFit { k, b: (si - k * st) / n })
}

/// Exposure that the fit predicts will reach the target, clamped to the bounds.
pub fn compute_t_opt(fit: &LinearFit, cfg: &ControllerConfig) -> Result<f64> {
    if !(fit.k >= cfg.slope_epsilon) || !fit.b.is_finite() {
        return Err(Error::FlatResponse { slope: fit.k, epsilon: cfg.slope_epsilon });
    }
    Ok(((cfg.i_target - fit.b) / fit.k).clamp(cfg.t_min, cfg.t_max))
}

/// Next `(T_l, T_h)` around `t_opt`.
pub fn update_bracket(t_opt: f64, cfg: &ControllerConfig) -> (f64, f64) {
    let [ll, lh] = cfg.low_bounds;
    let [hl, hh] = cfg.high_bounds;
    let lo = (cfg.bracket_low_factor * t_opt).clamp(ll, lh);
    let hi = (cfg.bracket_high_factor * t_opt).clamp(hl, hh);
    if lo < hi {
        return (lo, hi);
    }
    let mid = 0.5 * (lo + hi);
    let lo = (mid - 1.0).max(cfg.t_min);
    let hi = (mid + 1.0).min(cfg.t_max);
    (lo, hi)
}

/// Drops all but the two newest samples when `latest` strays from `fit`.
/// Returns whether a purge happened.
pub fn purge_on_outlier(
    state: &mut ControllerState,
    fit: &LinearFit,
    latest: &ExposureSample,
    cfg: &ControllerConfig,
) -> bool {
    if (latest.intensity - fit.predict(latest.exposure)).abs() > cfg.outlier_residual {
        while state.buffer.len() > 2 {
            state.buffer.pop_front();
        }
        true
    } else {
        false
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CycleFlags {
    /// `T_opt` sits at `t_max` and the optimal frame is still below target.
    pub underexposed_at_limit: bool,
    /// No usable slope; the exposure was held.
    pub flat_response: bool,
    /// A sample disagreed with the previous fit and the buffer was purged.
    pub purged: bool,
    /// At least one bracket sample was clipped.
    pub clipped_samples: bool,
    /// The response was fitted through the origin.
    pub proportional: bool,
}

impl fmt::Display for CycleFlags {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names = [
            (self.underexposed_at_limit, "underexposed_at_limit"),
            (self.flat_response, "flat_response"),
            (self.purged, "purged"),
            (self.clipped_samples, "clipped"),
            (self.proportional, "proportional"),
        ];
        let mut first = true;
        for (_, name) in names.iter().filter(|(on, _)| *on) {
            if !first {
                f.write_str("|")?;
            }
            f.write_str(name)?;
            first = false;
        }
        Ok(())
    }
}

/// One row of the per-cycle log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_index: usize,
    pub t: f64,
    pub t_l: f64,
    pub i_l: f64,
    pub t_h: f64,
    pub i_h: f64,
    pub k: Option<f64>,
    pub b: Option<f64>,
    pub t_opt: f64,
    pub mu_opt: f64,
    pub flags: CycleFlags,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TripletCycle {
    pub frame_low: Frame,
    pub frame_high: Frame,
    pub frame_opt: Frame,
    pub record: CycleRecord,
}

/// Picks the fit for this cycle from the buffer and the previous optimal sample.
fn choose_fit(
    state: &ControllerState,
    new: [&ExposureSample; 2],
    cfg: &ControllerConfig,
) -> (Result<LinearFit>, bool) {
    let usable: Vec<ExposureSample> =
        state.buffer.iter().filter(|s| !s.clipped).copied().collect();
    if new.iter().all(|s| !s.clipped) {
        return (fit_least_squares(&usable, cfg.slope_epsilon), false);
    }
    // A clipped pair leaves the intercept unidentified. Clipping only lowers a mean, so
    // a clipped sample also bounds the slope from below, k ≥ I/T; unclipped samples
    // below the bound of a fresh one are stale.
    let floor = new
        .iter()
        .filter(|s| s.clipped)
        .map(|s| s.intensity / s.exposure)
        .fold(0.0, f64::max);
    let pool: Vec<&ExposureSample> = usable
        .iter()
        .chain(state.last_opt.iter().filter(|s| !s.clipped))
        .filter(|s| s.intensity / s.exposure >= floor)
        .collect();
    let k = if pool.is_empty() {
        state
            .buffer
            .iter()
            .chain(state.last_opt.iter())
            .filter(|s| s.clipped)
            .map(|s| s.intensity / s.exposure)
            .fold(floor, f64::max)
    } else {
        // Least squares through the origin.
        let sti: f64 = pool.iter().map(|s| s.exposure * s.intensity).sum();
        let stt: f64 = pool.iter().map(|s| s.exposure * s.exposure).sum();
        sti / stt
    };
    let fit = check_slope(k, cfg.slope_epsilon).map(|_| LinearFit { k, b: 0.0 });
    (fit, true)
}

/// Runs one triplet cycle starting at `t` seconds and advances `state`.
pub fn run_cycle(
    state: &mut ControllerState,
    spec: &ScenarioSpec,
    sensor: &SensorConfig,
    cfg: &ControllerConfig,
    t: f64,
) -> Result<TripletCycle> {
    if cfg.t_min < sensor.t_min - 1e-9 || cfg.t_max > sensor.t_max + 1e-9 {
        return Err(Error::Precondition(format!(
            "controller bounds [{}, {}] ms exceed sensor bounds [{}, {}] ms",
            cfg.t_min, cfg.t_max, sensor.t_min, sensor.t_max
        )));
    }
    let slot = 1.0 / spec.cycle_rate;
    let (t_l, t_h) = state.bracket;
    let frame_low = capture(spec, sensor, t, t_l, StreamTag::Low)?;
    let frame_high = capture(spec, sensor, t + slot, t_h, StreamTag::High)?;
    let low = ExposureSample::from_frame(&frame_low, spec)?;
    let high = ExposureSample::from_frame(&frame_high, spec)?;

    let mut flags = CycleFlags {
        clipped_samples: low.clipped || high.clipped,
        ..CycleFlags::default()
    };
    state.buffer.push_back(low);
    state.buffer.push_back(high);
    while state.buffer.len() > cfg.buffer_capacity {
        state.buffer.pop_front();
    }
    if let Some(prev) = state.last_fit {
        for s in [&low, &high].into_iter().filter(|s| !s.clipped) {
            flags.purged |= purge_on_outlier(state, &prev, s, cfg);
        }
    }

    let (fit, proportional) = choose_fit(state, [&low, &high], cfg);
    flags.proportional = proportional;
    let fit = fit.ok();
    let t_opt = match fit.as_ref().map(|f| compute_t_opt(f, cfg)) {
        Some(Ok(t_opt)) => t_opt,
        _ => {
            flags.flat_response = true;
            state.last_t_opt.unwrap_or(0.5 * (t_l + t_h))
        }
    };
    if fit.is_some() && !flags.flat_response {
        state.last_fit = fit;
    }

    let frame_opt = capture(spec, sensor, t + 2.0 * slot, t_opt, StreamTag::Opt)?;
    let opt = ExposureSample::from_frame(&frame_opt, spec)?;
    flags.underexposed_at_limit = t_opt >= cfg.t_max - 1e-9 && opt.intensity < cfg.i_target;

    state.last_t_opt = Some(t_opt);
    state.last_opt = Some(opt);
    state.bracket = update_bracket(t_opt, cfg);
    let record = CycleRecord {
        cycle_index: state.cycles,
        t,
        t_l,
        i_l: low.intensity,
        t_h,
        i_h: high.intensity,
        k: fit.map(|f| f.k),
        b: fit.map(|f| f.b),
        t_opt,
        mu_opt: opt.intensity,
        flags,
    };
    state.cycles += 1;
    Ok(TripletCycle { frame_low, frame_high, frame_opt, record })
}
