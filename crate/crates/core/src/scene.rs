//! Synthetic in-cabin scene: incident illuminance over time and space, static skin
//! reflectance and the pulsatile component that carries the ground-truth heart rate.
//!
//! The scene is patch-granular. Every patch behaves as a single photometric unit
//! with its own static reflectance `R0`; patches inside the face ROI additionally
//! carry a small per-channel pulsatile term `R0 · a_c · s(θ(t))`, where `θ` is the
//! integrated heart-rate phase and `s` a unit-peak pulse shape.
//!
//! Illuminance is `L(x, y, t) = base_level · Π events(t) · g(x, y, t)`.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};

/// Number of colour channels (R, G, B) carried by every patch.
pub const CHANNELS: usize = 3;

/// Default triplet cadence in Hz.
pub const DEFAULT_CYCLE_RATE: f64 = 45.0;

/// Largest pulsatile amplitude relative to `R0`.
pub const MAX_PULSATILITY: f64 = 0.1;

const TIME_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PatchIndex {
    pub x: usize,
    pub y: usize,
}

impl PatchIndex {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatchGrid {
    pub width: usize,
    pub height: usize,
}

impl PatchGrid {
    pub const fn new(width: usize, height: usize) -> Self {
        Self { width, height }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, p: PatchIndex) -> bool {
        p.x < self.width && p.y < self.height
    }

    /// Row-major offset of a patch.
    pub fn offset(&self, p: PatchIndex) -> usize {
        p.y * self.width + p.x
    }

    pub fn patches(&self) -> impl Iterator<Item = PatchIndex> + '_ {
        (0..self.height).flat_map(move |y| (0..self.width).map(move |x| PatchIndex::new(x, y)))
    }
}

/// The set of patches designated as face.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RoiRepr", into = "RoiRepr")]
pub struct Roi {
    patches: Vec<PatchIndex>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RoiRepr {
    Rect {
        x: usize,
        y: usize,
        width: usize,
        height: usize,
    },
    List {
        patches: Vec<[usize; 2]>,
    },
}

impl TryFrom<RoiRepr> for Roi {
    type Error = Error;

    fn try_from(repr: RoiRepr) -> Result<Self> {
        let roi = match repr {
            RoiRepr::Rect { x, y, width, height } => Roi::rect(x, y, width, height),
            RoiRepr::List { patches } => {
                Roi::from_patches(patches.into_iter().map(|[x, y]| PatchIndex::new(x, y)))
            }
        };
        if roi.is_empty() {
            return Err(config("roi must contain at least one patch"));
        }
        Ok(roi)
    }
}

impl From<Roi> for RoiRepr {
    fn from(roi: Roi) -> Self {
        RoiRepr::List {
            patches: roi.patches.iter().map(|p| [p.x, p.y]).collect(),
        }
    }
}

impl Roi {
    /// Rectangle of patches starting at `(x, y)`.
    pub fn rect(x: usize, y: usize, width: usize, height: usize) -> Self {
        Self::from_patches(
            (y..y + height).flat_map(|yy| (x..x + width).map(move |xx| PatchIndex::new(xx, yy))),
        )
    }

    pub fn from_patches(patches: impl IntoIterator<Item = PatchIndex>) -> Self {
        let mut patches: Vec<_> = patches.into_iter().collect();
        patches.sort_by_key(|p| (p.y, p.x));
        patches.dedup();
        Self { patches }
    }

    pub fn patches(&self) -> &[PatchIndex] {
        &self.patches
    }

    pub fn len(&self) -> usize {
        self.patches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patches.is_empty()
    }

    pub fn contains(&self, p: PatchIndex) -> bool {
        self.patches.binary_search_by_key(&(p.y, p.x), |q| (q.y, q.x)).is_ok()
    }

    pub fn within(&self, grid: PatchGrid) -> bool {
        self.patches.iter().all(|&p| grid.contains(p))
    }
}

fn default_flicker_factor() -> f64 {
    0.3
}

fn default_flicker_period() -> f64 {
    0.5
}

fn default_duty() -> f64 {
    0.5
}

/// A multiplicative illumination event. Factors of all events multiply.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IlluminationEvent {
    /// Factor `magnitude` on `[start, start + duration)`; open-ended without a duration.
    Step {
        start: f64,
        magnitude: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<f64>,
    },
    /// Linear transition from 1 to `magnitude` over `duration`, then held.
    Ramp {
        start: f64,
        magnitude: f64,
        duration: f64,
    },
    /// Factor `1 + magnitude · sin(2π f (t - start))` while active.
    Sinusoid {
        start: f64,
        magnitude: f64,
        frequency: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<f64>,
    },
    /// Square wave: factor `magnitude` for the first `duty` fraction of every period.
    ShadowFlicker {
        start: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        duration: Option<f64>,
        #[serde(default = "default_flicker_factor")]
        magnitude: f64,
        #[serde(default = "default_flicker_period")]
        period: f64,
        #[serde(default = "default_duty")]
        duty: f64,
    },
}

impl IlluminationEvent {
    fn start(&self) -> f64 {
        match *self {
            Self::Step { start, .. }
            | Self::Ramp { start, .. }
            | Self::Sinusoid { start, .. }
            | Self::ShadowFlicker { start, .. } => start,
        }
    }

    fn end(&self) -> f64 {
        match *self {
            Self::Ramp { start, duration, .. } => start + duration,
            Self::Step { start, duration, .. }
            | Self::Sinusoid { start, duration, .. }
            | Self::ShadowFlicker { start, duration, .. } => {
                duration.map_or(f64::INFINITY, |d| start + d)
            }
        }
    }

    fn active(&self, t: f64) -> bool {
        t >= self.start() && t < self.end()
    }

    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            Self::Step { magnitude, .. } => {
                if self.active(t) {
                    magnitude
                } else {
                    1.0
                }
            }
            Self::Ramp { start, magnitude, duration } => {
                if t < start {
                    1.0
                } else if t >= start + duration {
                    magnitude
                } else {
                    1.0 + (magnitude - 1.0) * (t - start) / duration
                }
            }
            Self::Sinusoid { start, magnitude, frequency, .. } => {
                if self.active(t) {
                    1.0 + magnitude * (2.0 * PI * frequency * (t - start)).sin()
                } else {
                    1.0
                }
            }
            Self::ShadowFlicker { start, magnitude, period, duty, .. } => {
                if !self.active(t) {
                    return 1.0;
                }
                let phase = (t - start) / period;
                if phase - phase.floor() < duty {
                    magnitude
                } else {
                    1.0
                }
            }
        }
    }

    /// True where the factor varies continuously (ramp or sinusoid in progress).
    fn varies_at(&self, t: f64) -> bool {
        match self {
            Self::Ramp { .. } | Self::Sinusoid { .. } => self.active(t),
            _ => false,
        }
    }

    fn push_breakpoints(&self, a: f64, b: f64, out: &mut Vec<f64>) {
        let (start, end) = (self.start(), self.end());
        out.extend([start, end].into_iter().filter(|&x| x > a && x < b));
        if let Self::ShadowFlicker { period, duty, .. } = *self {
            let lo = a.max(start);
            let hi = b.min(end);
            if lo >= hi {
                return;
            }
            let first = ((lo - start) / period).floor() as i64;
            let last = ((hi - start) / period).ceil() as i64;
            for k in first..=last {
                let base = start + k as f64 * period;
                for edge in [base, base + duty * period] {
                    if edge > a && edge < b {
                        out.push(edge);
                    }
                }
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let finite = |v: f64, what: &str| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(config(format!("event {what} must be finite")))
            }
        };
        finite(self.start(), "start")?;
        if self.start() < 0.0 {
            return Err(config("event start must be >= 0"));
        }
        match *self {
            Self::Step { magnitude, duration, .. } => {
                if !(magnitude >= 0.0 && magnitude.is_finite()) {
                    return Err(config("step magnitude must be finite and >= 0"));
                }
                if duration.is_some_and(|d| !(d > 0.0)) {
                    return Err(config("step duration must be > 0"));
                }
            }
            Self::Ramp { magnitude, duration, .. } => {
                if !(magnitude >= 0.0 && magnitude.is_finite()) {
                    return Err(config("ramp magnitude must be finite and >= 0"));
                }
                if !(duration > 0.0 && duration.is_finite()) {
                    return Err(config("ramp duration must be > 0"));
                }
            }
            Self::Sinusoid { magnitude, frequency, duration, .. } => {
                if !(0.0..=1.0).contains(&magnitude.abs()) {
                    return Err(config("sinusoid magnitude must lie in [-1, 1]"));
                }
                if !(frequency > 0.0 && frequency.is_finite()) {
                    return Err(config("sinusoid frequency must be > 0"));
                }
                if duration.is_some_and(|d| !(d > 0.0)) {
                    return Err(config("sinusoid duration must be > 0"));
                }
            }
            Self::ShadowFlicker { duration, magnitude, period, duty, .. } => {
                if !(magnitude >= 0.0 && magnitude.is_finite()) {
                    return Err(config("flicker factor must be finite and >= 0"));
                }
                if !(period > 0.0 && period.is_finite()) {
                    return Err(config("flicker period must be > 0"));
                }
                if !(duty > 0.0 && duty < 1.0) {
                    return Err(config("flicker duty cycle must lie in (0, 1)"));
                }
                if duration.is_some_and(|d| !(d > 0.0)) {
                    return Err(config("flicker duration must be > 0"));
                }
            }
        }
        Ok(())
    }
}

/// Per-patch multiplicative gain grid with an activity window (visor shadow, side glare).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpatialGain {
    /// `rows[y][x]`, one row per grid row.
    pub rows: Vec<Vec<f64>>,
    #[serde(default)]
    pub start: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
}

impl SpatialGain {
    fn active(&self, t: f64) -> bool {
        t >= self.start && self.end.is_none_or(|e| t < e)
    }

    pub fn gain(&self, p: PatchIndex, t: f64) -> f64 {
        if self.active(t) {
            self.rows[p.y][p.x]
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IlluminationField {
    pub base_level: f64,
    #[serde(default)]
    pub events: Vec<IlluminationEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spatial: Option<SpatialGain>,
}

impl IlluminationField {
    pub fn constant(base_level: f64) -> Self {
        Self { base_level, events: Vec::new(), spatial: None }
    }

    /// Product of all temporal event factors.
    pub fn event_factor(&self, t: f64) -> f64 {
        self.events.iter().map(|e| e.factor(t)).product()
    }

    pub fn spatial_gain(&self, p: PatchIndex, t: f64) -> f64 {
        self.spatial.as_ref().map_or(1.0, |s| s.gain(p, t))
    }

    pub fn spatial_active(&self, t: f64) -> bool {
        self.spatial.as_ref().is_some_and(|s| s.active(t))
    }

    /// Incident illuminance `L(x, y, t)`.
    pub fn level(&self, p: PatchIndex, t: f64) -> f64 {
        self.base_level * self.event_factor(t) * self.spatial_gain(p, t)
    }

    pub(crate) fn varies_at(&self, t: f64) -> bool {
        self.events.iter().any(|e| e.varies_at(t))
    }

    /// Sorted interior points of `(a, b)` where the illuminance changes regime.
    pub(crate) fn breakpoints(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = Vec::new();
        for e in &self.events {
            e.push_breakpoints(a, b, &mut out);
        }
        if let Some(s) = &self.spatial {
            out.extend(
                std::iter::once(s.start)
                    .chain(s.end)
                    .filter(|&x| x > a && x < b),
            );
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
        out
    }

    fn validate(&self, grid: PatchGrid) -> Result<()> {
        if !(self.base_level > 0.0 && self.base_level.is_finite()) {
            return Err(config("illumination base_level must be finite and > 0"));
        }
        for e in &self.events {
            e.validate()?;
        }
        if let Some(s) = &self.spatial {
            if s.rows.len() != grid.height || s.rows.iter().any(|r| r.len() != grid.width) {
                return Err(config(format!(
                    "spatial gain map must be {}x{} (rows x columns)",
                    grid.height, grid.width
                )));
            }
            if s.rows.iter().flatten().any(|g| !(*g >= 0.0 && g.is_finite())) {
                return Err(config("spatial gains must be finite and >= 0"));
            }
            if s.end.is_some_and(|e| e <= s.start) {
                return Err(config("spatial gain end must be after start"));
            }
        }
        Ok(())
    }
}

/// Ground-truth heart-rate trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HeartRateProfile {
    Constant { hz: f64 },
    /// `(time s, frequency Hz)` knots, linearly interpolated and held beyond the ends.
    PiecewiseLinear { points: Vec<[f64; 2]> },
}

impl HeartRateProfile {
    pub fn frequency(&self, t: f64) -> f64 {
        match self {
            Self::Constant { hz } => *hz,
            Self::PiecewiseLinear { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if t <= first[0] {
                    return first[1];
                }
                if t >= last[0] {
                    return last[1];
                }
                let i = points.partition_point(|p| p[0] <= t);
                let (p, q) = (points[i - 1], points[i]);
                p[1] + (q[1] - p[1]) * (t - p[0]) / (q[0] - p[0])
            }
        }
    }

    /// `2π ∫_0^t f(u) du`.
    pub fn phase(&self, t: f64) -> f64 {
        let cycles = match self {
            Self::Constant { hz } => hz * t,
            Self::PiecewiseLinear { points } => {
                let first = points[0];
                let mut acc = 0.0;
                let mut cursor = 0.0;
                if t <= first[0] {
                    return 2.0 * PI * first[1] * t;
                }
                if first[0] > 0.0 {
                    acc += first[1] * first[0];
                    cursor = first[0];
                }
                for w in points.windows(2) {
                    let (p, q) = (w[0], w[1]);
                    if t <= p[0] {
                        break;
                    }
                    let lo = cursor.max(p[0]);
                    let hi = t.min(q[0]);
                    if hi > lo {
                        let f_lo = self.frequency(lo);
                        let f_hi = self.frequency(hi);
                        acc += 0.5 * (f_lo + f_hi) * (hi - lo);
                        cursor = hi;
                    }
                }
                let last = points[points.len() - 1];
                if t > last[0] {
                    acc += last[1] * (t - cursor.max(last[0]));
                }
                acc
            }
        };
        2.0 * PI * cycles
    }

    /// The frequency if it is constant over `[a, b]`.
    pub fn constant_on(&self, a: f64, b: f64) -> Option<f64> {
        match self {
            Self::Constant { hz } => Some(*hz),
            Self::PiecewiseLinear { points } => {
                let first = points[0];
                let last = points[points.len() - 1];
                if b <= first[0] {
                    return Some(first[1]);
                }
                if a >= last[0] {
                    return Some(last[1]);
                }
                let i = points.partition_point(|p| p[0] <= a);
                if i == 0 || i >= points.len() {
                    return None;
                }
                let (p, q) = (points[i - 1], points[i]);
                (b <= q[0] && p[1] == q[1]).then_some(p[1])
            }
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |hz: f64| hz > 0.0 && hz.is_finite();
        match self {
            Self::Constant { hz } => {
                if !ok(*hz) {
                    return Err(config("heart rate must be finite and > 0 Hz"));
                }
            }
            Self::PiecewiseLinear { points } => {
                if points.is_empty() {
                    return Err(config("piecewise heart-rate profile needs at least one point"));
                }
                if points.iter().any(|p| !ok(p[1]) || !p[0].is_finite()) {
                    return Err(config("heart-rate knots must be finite with f > 0"));
                }
                if points.windows(2).any(|w| w[1][0] <= w[0][0]) {
                    return Err(config("heart-rate knot times must be strictly increasing"));
                }
            }
        }
        Ok(())
    }
}

/// Pulse shape `s(θ)` with unit peak.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Waveform {
    #[default]
    Sine,
    /// Fundamental plus a phase-shifted second harmonic (dicrotic notch).
    Dicrotic,
}

// max over θ of sin θ + 0.4 sin(2θ + π/4)
pub(crate) const DICROTIC_PEAK: f64 = 0.995_521_534_971_276_9;

impl Waveform {
    pub fn value(self, theta: f64) -> f64 {
        match self {
            Self::Sine => theta.sin(),
            Self::Dicrotic => (theta.sin() + 0.4 * (2.0 * theta + PI / 4.0).sin()) / DICROTIC_PEAK,
        }
    }
}

/// Static reflectance map plus the pulsatile component.
#[derive(Debug, Clone, PartialEq)]
pub struct SkinReflectanceField {
    /// Row-major `R0` per patch, in `(0, 1]`.
    pub r0_map: Vec<f64>,
    /// Which patches carry the pulse (the skin patches).
    pub pulsatile: Vec<bool>,
    /// `A_c / R0` per channel (R, G, B).
    pub pulsatility: [f64; CHANNELS],
    pub heart_rate: HeartRateProfile,
    pub waveform: Waveform,
}

impl SkinReflectanceField {
    /// Reflectance of channel `c` at offset `i`, time `t`.
    pub fn reflectance(&self, i: usize, c: usize, t: f64) -> f64 {
        let r0 = self.r0_map[i];
        if self.pulsatile[i] {
            r0 * (1.0 + self.pulsatility[c] * self.waveform.value(self.heart_rate.phase(t)))
        } else {
            r0
        }
    }
}

/// A complete, validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    /// Seconds.
    pub duration: f64,
    /// Triplet cadence in Hz.
    pub cycle_rate: f64,
    pub grid: PatchGrid,
    pub roi: Roi,
    pub illumination: IlluminationField,
    pub skin: SkinReflectanceField,
    pub noise_seed: u64,
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(config("duration must be finite and > 0"));
        }
        if !(self.cycle_rate > 0.0 && self.cycle_rate.is_finite()) {
            return Err(config("cycle_rate must be finite and > 0"));
        }
        if self.grid.is_empty() {
            return Err(config("grid must have at least one patch"));
        }
        if self.roi.is_empty() {
            return Err(config("roi must contain at least one patch"));
        }
        if !self.roi.within(self.grid) {
            return Err(config("roi extends outside the grid"));
        }
        self.illumination.validate(self.grid)?;
        let n = self.grid.len();
        if self.skin.r0_map.len() != n || self.skin.pulsatile.len() != n {
            return Err(config("reflectance map does not match the grid"));
        }
        if self.skin.r0_map.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return Err(config("static reflectance must lie in (0, 1]"));
        }
        if self
            .skin
            .pulsatility
            .iter()
            .any(|a| !(*a >= 0.0 && *a <= MAX_PULSATILITY))
        {
            return Err(config(format!(
                "pulse amplitude must lie in [0, {MAX_PULSATILITY}] x R0"
            )));
        }
        self.skin.heart_rate.validate()
    }

    fn check_time(&self, t: f64) -> Result<()> {
        if !(t >= 0.0 && t <= self.duration + TIME_EPS) {
            return Err(domain(format!(
                "time {t} s outside [0, {}] s",
                self.duration
            )));
        }
        Ok(())
    }

    fn check_patch(&self, p: PatchIndex) -> Result<()> {
        if !self.grid.contains(p) {
            return Err(domain(format!(
                "patch ({}, {}) outside {}x{} grid",
                p.x, p.y, self.grid.width, self.grid.height
            )));
        }
        Ok(())
    }

    pub(crate) fn check_interval(&self, t: f64, seconds: f64) -> Result<()> {
        self.check_time(t)?;
        if t + seconds > self.duration + TIME_EPS {
            return Err(Error::Precondition(format!(
                "exposure ending at {} s runs past the scenario end {} s",
                t + seconds,
                self.duration
            )));
        }
        Ok(())
    }

    /// `L · R` for one channel of one patch.
    pub fn radiance(&self, p: PatchIndex, channel: usize, t: f64) -> Result<f64> {
        self.check_patch(p)?;
        self.check_time(t)?;
        if channel >= CHANNELS {
            return Err(domain(format!("channel {channel} out of range")));
        }
        let i = self.grid.offset(p);
        Ok(self.illumination.level(p, t) * self.skin.reflectance(i, channel, t))
    }

    /// Reference heart rate in bpm.
    pub fn ground_truth_hr(&self, t: f64) -> Result<f64> {
        self.check_time(t)?;
        Ok(60.0 * self.skin.heart_rate.frequency(t))
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: ScenarioFile =
            toml::from_str(text).map_err(|e| config(format!("scenario parse error: {e}")))?;
        file.build()
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }
}

/// `L(x,y,t) · R(x,y,t)` for channel `channel`.
pub fn scene_radiance(spec: &ScenarioSpec, p: PatchIndex, channel: usize, t: f64) -> Result<f64> {
    spec.radiance(p, channel, t)
}

/// `60 · f_hr(t)`.
pub fn ground_truth_hr(spec: &ScenarioSpec, t: f64) -> Result<f64> {
    spec.ground_truth_hr(t)
}

fn default_rate() -> f64 {
    DEFAULT_CYCLE_RATE
}

fn default_channel_weights() -> [f64; CHANNELS] {
    [0.3, 1.0, 0.6]
}

fn default_pulsatility() -> f64 {
    0.01
}

fn default_face_r0() -> f64 {
    0.5
}

fn default_background_r0() -> f64 {
    0.05
}

/// Skin description as written in scenario files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SkinFile {
    #[serde(default = "default_face_r0")]
    pub face_reflectance: f64,
    #[serde(default = "default_background_r0")]
    pub background_reflectance: f64,
    /// Relative amplitude of a deterministic per-patch reflectance pattern on the face.
    #[serde(default)]
    pub face_variation: f64,
    /// Full `R0` map (`rows[y][x]`); overrides the three fields above.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reflectance_rows: Option<Vec<Vec<f64>>>,
    /// Pulse amplitude relative to `R0` before channel weighting.
    #[serde(default = "default_pulsatility")]
    pub pulsatility: f64,
    #[serde(default = "default_channel_weights")]
    pub channel_weights: [f64; CHANNELS],
    #[serde(default)]
    pub waveform: Waveform,
    pub heart_rate: HeartRateProfile,
}

impl Default for SkinFile {
    fn default() -> Self {
        Self {
            face_reflectance: default_face_r0(),
            background_reflectance: default_background_r0(),
            face_variation: 0.0,
            reflectance_rows: None,
            pulsatility: default_pulsatility(),
            channel_weights: default_channel_weights(),
            waveform: Waveform::Sine,
            heart_rate: HeartRateProfile::Constant { hz: 1.2 },
        }
    }
}

/// Deterministic pattern in `[-1, 1]`.
fn face_pattern(p: PatchIndex) -> f64 {
    ((p.x * 7 + p.y * 13) % 11) as f64 / 5.0 - 1.0
}

/// The on-disk scenario schema (TOML). `build` validates and resolves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub name: String,
    pub duration: f64,
    #[serde(default = "default_rate")]
    pub cycle_rate: f64,
    #[serde(default)]
    pub noise_seed: u64,
    pub grid: PatchGrid,
    pub roi: Roi,
    pub illumination: IlluminationField,
    #[serde(default)]
    pub skin: SkinFile,
}

impl ScenarioFile {
    pub fn build(&self) -> Result<ScenarioSpec> {
        let grid = self.grid;
        let skin = &self.skin;
        let r0_map = match &skin.reflectance_rows {
            Some(rows) => {
                if rows.len() != grid.height || rows.iter().any(|r| r.len() != grid.width) {
                    return Err(config("reflectance_rows must match the grid"));
                }
                rows.iter().flatten().copied().collect()
            }
            None => grid
                .patches()
                .map(|p| {
                    if self.roi.contains(p) {
                        skin.face_reflectance * (1.0 + skin.face_variation * face_pattern(p))
                    } else {
                        skin.background_reflectance
                    }
                })
                .collect(),
        };
        let spec = ScenarioSpec {
            name: self.name.clone(),
            duration: self.duration,
            cycle_rate: self.cycle_rate,
            grid,
            roi: self.roi.clone(),
            illumination: self.illumination.clone(),
            skin: SkinReflectanceField {
                r0_map,
                pulsatile: grid.patches().map(|p| self.roi.contains(p)).collect(),
                pulsatility: skin.channel_weights.map(|w| w * skin.pulsatility),
                heart_rate: skin.heart_rate.clone(),
                waveform: skin.waveform,
            },
            noise_seed: self.noise_seed,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(level: f64, r0: f64, pulsatility: f64) -> ScenarioSpec {
        ScenarioFile {
            name: "flat".into(),
            duration: 60.0,
            cycle_rate: 45.0,
            noise_seed: 0,
            grid: PatchGrid::new(2, 2),
            roi: Roi::rect(0, 0, 2, 2),
            illumination: IlluminationField::constant(level),
            skin: SkinFile {
                face_reflectance: r0,
                pulsatility,
                channel_weights: [1.0; 3],
                ..SkinFile::default()
            },
        }
        .build()
        .unwrap()
    }

    #[test]
    fn constant_scene_radiance_is_product() {
        let spec = flat(100.0, 0.5, 0.0);
        for t in [0.0, 3.3, 60.0] {
            assert_eq!(spec.radiance(PatchIndex::new(1, 1), 1, t).unwrap(), 50.0);
        }
    }

    #[test]
    fn pulse_zero_crossing_gives_dc() {
        let spec = flat(100.0, 0.5, 0.05);
        // sin(2π·1.2·t) = 0 at t = k / 2.4
        let t = 5.0 / 2.4;
        let r = spec.radiance(PatchIndex::new(0, 0), 1, t).unwrap();
        assert!((r - 50.0).abs() < 1e-12);
    }

    #[test]
    fn step_event_multiplies() {
        let mut spec = flat(100.0, 0.5, 0.0);
        spec.illumination.events.push(IlluminationEvent::Step {
            start: 10.0,
            magnitude: 4.0,
            duration: None,
        });
        let p = PatchIndex::new(0, 1);
        let before = spec.radiance(p, 0, 10.0 - 1e-6).unwrap();
        let after = spec.radiance(p, 0, 10.0 + 1e-6).unwrap();
        assert_eq!(after, 4.0 * before);
    }

    #[test]
    fn radiance_domain_errors() {
        let spec = flat(100.0, 0.5, 0.0);
        assert!(matches!(spec.radiance(PatchIndex::new(2, 0), 0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(spec.radiance(PatchIndex::new(0, 0), 0, -0.1), Err(Error::Domain(_))));
        assert!(matches!(spec.radiance(PatchIndex::new(0, 0), 0, 60.5), Err(Error::Domain(_))));
    }

    #[test]
    fn ground_truth_constant_and_ramp() {
        let mut spec = flat(100.0, 0.5, 0.0);
        assert!((spec.ground_truth_hr(12.0).unwrap() - 72.0).abs() < 1e-12);
        spec.skin.heart_rate = HeartRateProfile::PiecewiseLinear {
            points: vec![[0.0, 1.0], [60.0, 1.5]],
        };
        assert!((spec.ground_truth_hr(30.0).unwrap() - 75.0).abs() < 1e-12);
        assert!((spec.ground_truth_hr(60.0).unwrap() - 90.0).abs() < 1e-12);
        assert!(spec.ground_truth_hr(60.1).is_err());
    }

    #[test]
    fn piecewise_phase_matches_trapezoid_integral() {
        let hr = HeartRateProfile::PiecewiseLinear {
            points: vec![[5.0, 1.0], [15.0, 2.0], [20.0, 2.0]],
        };
        // 5 s at 1 Hz, ramp area 15, then 2 Hz flat
        let expect = |t: f64| -> f64 {
            if t <= 5.0 {
                t
            } else if t <= 15.0 {
                5.0 + (t - 5.0) + 0.05 * (t - 5.0) * (t - 5.0)
            } else {
                5.0 + 15.0 + 2.0 * (t - 15.0)
            }
        };
        for t in [0.0, 2.5, 5.0, 7.5, 15.0, 18.0, 25.0] {
            let got = hr.phase(t) / (2.0 * PI);
            assert!((got - expect(t)).abs() < 1e-12, "t={t}: {got} vs {}", expect(t));
        }
        assert_eq!(hr.constant_on(16.0, 17.0), Some(2.0));
        assert_eq!(hr.constant_on(6.0, 7.0), None);
        assert_eq!(hr.constant_on(0.0, 4.0), Some(1.0));
    }

    #[test]
    fn flicker_breakpoints_and_factor() {
        let e = IlluminationEvent::ShadowFlicker {
            start: 1.0,
            duration: Some(2.0),
            magnitude: 0.3,
            period: 0.5,
            duty: 0.5,
        };
        assert_eq!(e.factor(0.9), 1.0);
        assert_eq!(e.factor(1.1), 0.3);
        assert_eq!(e.factor(1.3), 1.0);
        assert_eq!(e.factor(3.0), 1.0);
        let mut bp = Vec::new();
        e.push_breakpoints(1.2, 1.8, &mut bp);
        bp.sort_by(f64::total_cmp);
        assert_eq!(bp, vec![1.25, 1.5, 1.75]);
    }

    #[test]
    fn dicrotic_has_unit_peak() {
        let peak = (0..200_000)
            .map(|i| Waveform::Dicrotic.value(i as f64 * 2.0 * PI / 200_000.0))
            .fold(f64::MIN, f64::max);
        assert!((peak - 1.0).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip_and_errors() {
        let text = r#"
            name = "demo"
            duration = 30.0
            noise_seed = 3
            [grid]
            width = 4
            height = 4
            [roi]
            x = 1
            y = 1
            width = 2
            height = 2
            [illumination]
            base_level = 40.0
            [[illumination.events]]
            kind = "step"
            start = 10.0
            magnitude = 2.0
            [[illumination.events]]
            kind = "shadow_flicker"
            start = 2.0
            duration = 4.0
            [skin]
            pulsatility = 0.02
            [skin.heart_rate]
            kind = "constant"
            hz = 1.1
        "#;
        let spec = ScenarioSpec::from_toml_str(text).unwrap();
        assert_eq!(spec.roi.len(), 4);
        assert_eq!(spec.illumination.events.len(), 2);
        assert!((spec.skin.pulsatility[1] - 0.02).abs() < 1e-15);
        assert!(!spec.skin.pulsatile[0]);
        assert!(spec.skin.pulsatile[5]);

        let bad = text.replace("width = 2\n", "width = 9\n");
        assert!(matches!(ScenarioSpec::from_toml_str(&bad), Err(Error::Config(_))));
        let bad = text.replace("pulsatility = 0.02", "pulsatility = 0.2");
        assert!(matches!(ScenarioSpec::from_toml_str(&bad), Err(Error::Config(_))));
        let err = ScenarioSpec::from_toml_str("name = 1").unwrap_err();
        assert!(err.to_string().contains("line"), "{err}");
    }
}
