//! Patch-level camera model: exposure integration, responsivity, read noise,
//! quantization and saturation.
//!
//! Per patch and channel `c` the captured code is
//!
//! ```text
//! I = clip(round(K_c · ∫_t^{t+T} L·R dτ + n), 0, i_max),   n ~ N(0, σ²)
//! ```
//!
//! with `τ` in seconds and `T` in milliseconds, so `K·L·R0` is expressed in codes per ms.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::quadrature::gauss_legendre;
use crate::scene::{PatchGrid, PatchIndex, Roi, ScenarioSpec, Waveform, CHANNELS, DICROTIC_PEAK};

/// Largest exposure a triplet-frame controller can use: one 45 fps slot.
pub const TRIPLET_SLOT_MS: f64 = 1000.0 / 45.0;

const BOUND_EPS: f64 = 1e-9;

fn default_responsivity() -> f64 {
    1.0
}
fn default_gains() -> [f64; CHANNELS] {
    [1.0; CHANNELS]
}
fn default_bit_depth() -> u32 {
    8
}
fn default_t_min() -> f64 {
    0.1
}
fn default_t_max() -> f64 {
    22.2
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    /// Codes per (radiance · ms).
    #[serde(default = "default_responsivity")]
    pub responsivity: f64,
    /// Per-channel multiplier on `responsivity`.
    #[serde(default = "default_gains")]
    pub channel_gains: [f64; CHANNELS],
    #[serde(default = "default_bit_depth")]
    pub bit_depth: u32,
    /// Milliseconds.
    #[serde(default = "default_t_min")]
    pub t_min: f64,
    /// Milliseconds.
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default)]
    pub read_noise_sigma: f64,
    #[serde(default = "default_true")]
    pub quantize: bool,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            responsivity: default_responsivity(),
            channel_gains: default_gains(),
            bit_depth: default_bit_depth(),
            t_min: default_t_min(),
            t_max: default_t_max(),
            read_noise_sigma: 0.0,
            quantize: true,
        }
    }
}

impl SensorConfig {
    pub fn i_max(&self) -> f64 {
        ((1u64 << self.bit_depth) - 1) as f64
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.read_noise_sigma = sigma;
        self
    }

    pub fn with_t_max(mut self, t_max: f64) -> Self {
        self.t_max = t_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.responsivity > 0.0 && self.responsivity.is_finite()) {
            return Err(config("sensor responsivity must be finite and > 0"));
        }
        if self.channel_gains.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(config("sensor channel gains must be finite and > 0"));
        }
        if !(1..=16).contains(&self.bit_depth) {
            return Err(config("sensor bit depth must lie in 1..=16"));
        }
        if !(self.t_min > 0.0 && self.t_min < self.t_max && self.t_max.is_finite()) {
            return Err(config("sensor exposure bounds must satisfy 0 < t_min < t_max"));
        }
        if !(self.read_noise_sigma >= 0.0 && self.read_noise_sigma.is_finite()) {
            return Err(config("read noise sigma must be finite and >= 0"));
        }
        Ok(())
    }

    pub(crate) fn check_exposure(&self, exposure_ms: f64) -> Result<()> {
        if !(exposure_ms >= self.t_min - BOUND_EPS && exposure_ms <= self.t_max + BOUND_EPS) {
            return Err(Error::Precondition(format!(
                "exposure {exposure_ms} ms outside sensor bounds [{}, {}] ms",
                self.t_min, self.t_max
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StreamTag {
    Low,
    High,
    Opt,
    Fused,
    Auto,
    Fixed,
}

impl StreamTag {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Low => "low",
            Self::High => "high",
            Self::Opt => "opt",
            Self::Fused => "fused",
            Self::Auto => "auto",
            Self::Fixed => "fixed",
        }
    }
}

/// One captured (or fused) frame of patch codes.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub grid: PatchGrid,
    /// Row-major per-patch RGB codes in `[0, i_max]`.
    pub intensities: Vec<[f64; CHANNELS]>,
    pub exposure_ms: f64,
    /// Seconds, start of exposure.
    pub timestamp: f64,
    pub tag: StreamTag,
    pub i_max: f64,
}

impl Frame {
    /// A frame with the same code on every patch and channel.
    pub fn uniform(grid: PatchGrid, code: f64, exposure_ms: f64, timestamp: f64) -> Self {
        Self {
            grid,
            intensities: vec![[code; CHANNELS]; grid.len()],
            exposure_ms,
            timestamp,
            tag: StreamTag::Fixed,
            i_max: 255.0,
        }
    }

    pub fn patch(&self, p: PatchIndex) -> [f64; CHANNELS] {
        self.intensities[self.grid.offset(p)]
    }

    /// Channel mean of the patch at row-major offset `i`.
    pub fn luma(&self, i: usize) -> f64 {
        self.intensities[i].iter().sum::<f64>() / CHANNELS as f64
    }

    /// `μ_ROI`: mean over ROI patches of the channel-mean code.
    pub fn roi_mean(&self, roi: &Roi) -> Result<f64> {
        roi_mean(self, roi)
    }

    pub fn fullframe_mean(&self) -> f64 {
        (0..self.intensities.len()).map(|i| self.luma(i)).sum::<f64>() / self.intensities.len() as f64
    }

    /// ROI patches with any channel at `i_max`.
    pub fn saturated_count(&self, roi: &Roi) -> usize {
        roi.patches()
            .iter()
            .filter(|&&p| self.patch(p).iter().any(|&v| v >= self.i_max))
            .count()
    }
}

/// Arithmetic mean of the ROI patch codes (channel-averaged).
pub fn roi_mean(frame: &Frame, roi: &Roi) -> Result<f64> {
    if roi.is_empty() {
        return Err(domain("roi is empty"));
    }
    if !roi.within(frame.grid) {
        return Err(domain("roi extends outside the frame grid"));
    }
    let sum: f64 = roi.patches().iter().map(|&p| frame.luma(frame.grid.offset(p))).sum();
    Ok(sum / roi.len() as f64)
}

/// `∫ sin(n·θ(τ) + φ) dτ` over `[a, b]` for a phase advancing at constant `ω`.
fn harmonic_integral(n: f64, phi: f64, theta_mid: f64, omega: f64, h: f64) -> f64 {
    let x = 0.5 * n * omega * h;
    let sinc = if x.abs() < 1e-8 { 1.0 - x * x / 6.0 } else { x.sin() / x };
    h * (n * theta_mid + phi).sin() * sinc
}

/// `∫ s(θ(τ)) dτ` over `[a, b]` when the heart rate is constant there.
fn pulse_integral_closed(w: Waveform, a: f64, b: f64, theta_mid: f64, hz: f64) -> f64 {
    let h = b - a;
    let omega = 2.0 * PI * hz;
    match w {
        Waveform::Sine => harmonic_integral(1.0, 0.0, theta_mid, omega, h),
        Waveform::Dicrotic => {
            let raw = harmonic_integral(1.0, 0.0, theta_mid, omega, h)
                + 0.4 * harmonic_integral(2.0, PI / 4.0, theta_mid, omega, h);
            raw / DICROTIC_PEAK
        }
    }
}

/// Time integrals over one exposure piece on which the spatial gain is constant.
struct Piece {
    /// Spatial gain evaluated inside the piece.
    mid: f64,
    /// `∫ event_factor dτ` (seconds).
    j0: f64,
    /// `∫ event_factor · s(θ) dτ` (seconds).
    j1: f64,
}

fn exposure_pieces(spec: &ScenarioSpec, a: f64, b: f64) -> Vec<Piece> {
    let illum = &spec.illumination;
    let skin = &spec.skin;
    let mut edges = vec![a];
    edges.extend(illum.breakpoints(a, b));
    edges.push(b);
    edges
        .windows(2)
        .filter(|w| w[1] > w[0])
        .map(|w| {
            let (p, q) = (w[0], w[1]);
            let mid = 0.5 * (p + q);
            let pulse = |tau: f64| skin.waveform.value(skin.heart_rate.phase(tau));
            let (j0, j1) = if illum.varies_at(mid) {
                (
                    gauss_legendre(p, q, |tau| illum.event_factor(tau)),
                    gauss_legendre(p, q, |tau| illum.event_factor(tau) * pulse(tau)),
                )
            } else {
                let ef = illum.event_factor(mid);
                let ac = match skin.heart_rate.constant_on(p, q) {
                    Some(hz) => pulse_integral_closed(
                        skin.waveform,
                        p,
                        q,
                        skin.heart_rate.phase(mid),
                        hz,
                    ),
                    None => gauss_legendre(p, q, pulse),
                };
                (ef * (q - p), ef * ac)
            };
            Piece { mid, j0, j1 }
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Noise-free accumulated signal `K_c ∫ L·R dτ` per patch and channel.
pub fn expected_signal(
    spec: &ScenarioSpec,
    sensor: &SensorConfig,
    t: f64,
    exposure_ms: f64,
) -> Result<Vec<[f64; CHANNELS]>> {
    sensor.check_exposure(exposure_ms)?;
    spec.check_interval(t, exposure_ms / 1000.0)?;
    let pieces = exposure_pieces(spec, t, t + exposure_ms / 1000.0);
    let base = spec.illumination.base_level;
    let skin = &spec.skin;
    Ok(spec
        .grid
        .patches()
        .enumerate()
        .map(|(i, p)| {
            let (mut j0, mut j1) = (0.0, 0.0);
            for piece in &pieces {
                let g = spec.illumination.spatial_gain(p, piece.mid);
                j0 += g * piece.j0;
                j1 += g * piece.j1;
            }
            let scale = 1000.0 * sensor.responsivity * base * skin.r0_map[i];
            std::array::from_fn(|c| {
                let a = if skin.pulsatile[i] { skin.pulsatility[c] } else { 0.0 };
                scale * sensor.channel_gains[c] * (j0 + a * j1)
            })
        })
        .collect())
}

/// Captures one frame starting at `t` seconds with exposure `exposure_ms`.
pub fn capture(
    spec: &ScenarioSpec,
    sensor: &SensorConfig,
    t: f64,
    exposure_ms: f64,
    tag: StreamTag,
) -> Result<Frame> {
    let mut signal = expected_signal(spec, sensor, t, exposure_ms)?;
    let i_max = sensor.i_max();
    let noise = (sensor.read_noise_sigma > 0.0).then(|| {
        let seed = splitmix(spec.noise_seed ^ splitmix(t.to_bits()));
        (
            ChaCha8Rng::seed_from_u64(seed),
            Normal::new(0.0, sensor.read_noise_sigma).expect("sigma validated finite"),
        )
    });
    if let Some((mut rng, normal)) = noise {
        for v in signal.iter_mut().flatten() {
            *v += normal.sample(&mut rng);
        }
    }
    for v in signal.iter_mut().flatten() {
        if sensor.quantize {
            *v = v.round();
        }
        *v = v.clamp(0.0, i_max);
    }
    Ok(Frame {
        grid: spec.grid,
        intensities: signal,
        exposure_ms,
        timestamp: t,
        tag,
        i_max,
    })
}

/// `(T, μ_ROI)` for each exposure, captured at the same start time.
pub fn response_curve(
    spec: &ScenarioSpec,
    sensor: &SensorConfig,
    t: f64,
    exposures: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if exposures.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("exposures must be strictly increasing".into()));
    }
    exposures
        .iter()
        .map(|&e| {
            let f = capture(spec, sensor, t, e, StreamTag::Fixed)?;
            Ok((e, roi_mean(&f, &spec.roi)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{IlluminationField, ScenarioFile, SkinFile};
    use proptest::prelude::*;

    fn scene(level: f64, pulsatility: f64) -> ScenarioSpec {
        ScenarioFile {
            name: "s".into(),
            duration: 30.0,
            cycle_rate: 45.0,
            noise_seed: 1,
            grid: PatchGrid::new(3, 3),
            roi: Roi::rect(0, 0, 3, 3),
            illumination: IlluminationField::constant(level),
            skin: SkinFile {
                face_reflectance: 0.5,
                pulsatility,
                channel_weights: [1.0; 3],
                ..SkinFile::default()
            },
        }
        .build()
        .unwrap()
    }

    #[test]
    fn dc_arithmetic_and_clip() {
        // K·L·R0 = 10 codes/ms
        let spec = scene(20.0, 0.0);
        let s = SensorConfig::default().with_t_max(40.0);
        let f = capture(&spec, &s, 1.0, 10.0, StreamTag::Fixed).unwrap();
        assert!(f.intensities.iter().flatten().all(|&v| v == 100.0));
        let f = capture(&spec, &s, 1.0, 30.0, StreamTag::Fixed).unwrap();
        assert!(f.intensities.iter().flatten().all(|&v| v == 255.0));
    }

    #[test]
    fn response_curve_examples() {
        let s = SensorConfig::default();
        let spec = scene(20.0, 0.0);
        let r = response_curve(&spec, &s, 0.0, &[5.0, 10.0, 15.0]).unwrap();
        assert_eq!(r, vec![(5.0, 50.0), (10.0, 100.0), (15.0, 150.0)]);
        let spec = scene(40.0, 0.0);
        let r = response_curve(&spec, &s, 0.0, &[10.0, 15.0, 20.0]).unwrap();
        assert_eq!(r, vec![(10.0, 200.0), (15.0, 255.0), (20.0, 255.0)]);
        assert!(response_curve(&spec, &s, 0.0, &[10.0, 10.0]).is_err());
    }

    #[test]
    fn exposure_bounds_are_preconditions() {
        let spec = scene(20.0, 0.0);
        let s = SensorConfig::default();
        for e in [0.05, 22.3] {
            assert!(matches!(
                capture(&spec, &s, 0.0, e, StreamTag::Fixed),
                Err(Error::Precondition(_))
            ));
        }
        assert!(matches!(
            capture(&spec, &s, 29.99, 20.0, StreamTag::Fixed),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn roi_mean_examples() {
        let grid = PatchGrid::new(2, 1);
        let mut f = Frame::uniform(grid, 140.0, 10.0, 0.0);
        let roi = Roi::rect(0, 0, 2, 1);
        assert_eq!(roi_mean(&f, &roi).unwrap(), 140.0);
        f.intensities[0] = [100.0; 3];
        f.intensities[1] = [200.0; 3];
        assert_eq!(roi_mean(&f, &roi).unwrap(), 150.0);
        assert_eq!(roi_mean(&f, &Roi::rect(1, 0, 1, 1)).unwrap(), 200.0);
        assert!(matches!(roi_mean(&f, &Roi::from_patches([])), Err(Error::Domain(_))));
    }

    #[test]
    fn saturation_onset_halves_with_double_light() {
        let s = SensorConfig::default();
        let exposures: Vec<f64> = (1..=220).map(|i| i as f64 * 0.1).collect();
        let onset = |level: f64| {
            let r = response_curve(&scene(level, 0.0), &s, 0.0, &exposures).unwrap();
            r.iter().find(|(_, m)| *m >= 255.0).map(|(t, _)| *t).unwrap()
        };
        // K·L·R0·T = 254.5 rounds to 255: onset at 254.5 / (0.5·L)
        let (t1, t2) = (onset(30.0), onset(60.0));
        assert!((t1 - 17.0).abs() < 0.051, "{t1}");
        assert!((t2 - 8.5).abs() < 0.051, "{t2}");
    }

    #[test]
    fn noise_is_seeded_and_deterministic() {
        let spec = scene(20.0, 0.0);
        let s = SensorConfig::default().with_noise(2.0);
        let a = capture(&spec, &s, 1.0, 10.0, StreamTag::Fixed).unwrap();
        let b = capture(&spec, &s, 1.0, 10.0, StreamTag::Fixed).unwrap();
        assert_eq!(a, b);
        assert!(a.intensities.iter().flatten().any(|&v| v != 100.0));
        let c = capture(&spec, &s, 1.0 + 1.0 / 45.0, 10.0, StreamTag::Fixed).unwrap();
        assert_ne!(a.intensities, c.intensities);
    }

    #[test]
    fn dicrotic_closed_form_matches_quadrature() {
        let mut spec = scene(20.0, 0.05);
        spec.skin.waveform = Waveform::Dicrotic;
        let s = SensorConfig { quantize: false, ..SensorConfig::default() };
        let got = expected_signal(&spec, &s, 2.3, 20.0).unwrap()[0][1];
        let (a, b) = (2.3, 2.32);
        let mut q = 0.0;
        let n = 2000;
        for k in 0..n {
            let lo = a + (b - a) * k as f64 / n as f64;
            let hi = a + (b - a) * (k + 1) as f64 / n as f64;
            q += gauss_legendre(lo, hi, |tau| {
                1.0 + 0.05 * Waveform::Dicrotic.value(2.0 * PI * 1.2 * tau)
            });
        }
        let expect = 1000.0 * 20.0 * 0.5 * q;
        assert!((got - expect).abs() < 1e-9, "{got} vs {expect}");
    }

    proptest! {
        #[test]
        fn monotone_and_linear(level in 1.0f64..60.0, t in 0.0f64..20.0, e in 0.2f64..22.2, a in 0.05f64..1.0) {
            let spec = scene(level, 0.0);
            let s = SensorConfig::default();
            let full = capture(&spec, &s, t, e, StreamTag::Fixed).unwrap().roi_mean(&spec.roi).unwrap();
            let part = capture(&spec, &s, t, (e * a).max(0.1), StreamTag::Fixed).unwrap().roi_mean(&spec.roi).unwrap();
            prop_assert!(part <= full);
            if full < 255.0 && e * a >= 0.1 {
                prop_assert!((part - a * full).abs() <= 1.0);
            }
        }

        #[test]
        fn codes_stay_in_range(level in 0.1f64..500.0, e in 0.1f64..22.2, sigma in 0.0f64..20.0) {
            let spec = scene(level, 0.05);
            let s = SensorConfig::default().with_noise(sigma);
            let f = capture(&spec, &s, 3.0, e, StreamTag::Fixed).unwrap();
            prop_assert!(f.intensities.iter().flatten().all(|&v| (0.0..=255.0).contains(&v)));
        }
    }
}
