//! Heart-rate accuracy metrics and empirical distribution summaries.

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::rppg::{hann, HrSeries, PulseWave, Spectrum};

/// Default success-rate tolerance, bpm.
pub const DEFAULT_TOLERANCE: f64 = 5.0;

/// Reference value at `t`, linearly interpolated and held beyond the ends.
pub fn interpolate(reference: &HrSeries, t: f64) -> Result<f64> {
    let e = &reference.estimates;
    let first = e.first().ok_or_else(|| domain("empty reference series"))?;
    let last = e[e.len() - 1];
    if t <= first.t {
        return Ok(first.bpm);
    }
    if t >= last.t {
        return Ok(last.bpm);
    }
    let i = e.partition_point(|x| x.t <= t);
    let (a, b) = (e[i - 1], e[i]);
    Ok(a.bpm + (b.bpm - a.bpm) * (t - a.t) / (b.t - a.t))
}

/// `|est - ref|` with the reference aligned to the estimate timestamps.
pub fn abs_errors(est: &HrSeries, reference: &HrSeries) -> Result<Vec<f64>> {
    if est.is_empty() {
        return Err(domain("empty estimate series"));
    }
    est.estimates
        .iter()
        .map(|e| Ok((e.bpm - interpolate(reference, e.t)?).abs()))
        .collect()
}

pub fn mae(est: &HrSeries, reference: &HrSeries) -> Result<f64> {
    let errs = abs_errors(est, reference)?;
    Ok(errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Percentage of estimates within `tol` bpm (inclusive).
pub fn success_rate(est: &HrSeries, reference: &HrSeries, tol: f64) -> Result<f64> {
    let errs = abs_errors(est, reference)?;
    Ok(100.0 * errs.iter().filter(|&&e| e <= tol).count() as f64 / errs.len() as f64)
}

fn default_snr_window() -> f64 {
    20.0
}
fn default_half_width() -> f64 {
    0.1
}
fn default_snr_band() -> [f64; 2] {
    [0.7, 4.0]
}
fn default_clamp() -> f64 {
    60.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnrConfig {
    /// Analysis window, seconds; hop is half of it.
    #[serde(default = "default_snr_window")]
    pub window_s: f64,
    /// Signal half-width around the fundamental and first harmonic, Hz.
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_snr_band")]
    pub band: [f64; 2],
    /// Per-window values are clamped to `±clamp_db`; silent windows score `-clamp_db`.
    #[serde(default = "default_clamp")]
    pub clamp_db: f64,
    #[serde(default = "default_nfft")]
    pub nfft: usize,
}

fn default_nfft() -> usize {
    4096
}

impl Default for SnrConfig {
    fn default() -> Self {
        Self {
            window_s: default_snr_window(),
            half_width: default_half_width(),
            band: default_snr_band(),
            clamp_db: default_clamp(),
            nfft: default_nfft(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnrResult {
    /// Mean over evaluated windows, dB.
    pub mean_db: f64,
    pub per_window: Vec<(f64, f64)>,
    /// Windows skipped because the reference fell outside the usable range.
    pub skipped: usize,
}

/// Spectral SNR of the pulse wave against the reference heart rate.
pub fn snr_db(wave: &PulseWave, reference: &HrSeries, cfg: &SnrConfig) -> Result<SnrResult> {
    let w = (cfg.window_s * wave.rate).round() as usize;
    if w < 2 || w > wave.samples.len() {
        return Err(domain(format!(
            "wave of {} samples is shorter than the {w}-sample SNR window",
            wave.samples.len()
        )));
    }
    let hop = (w / 2).max(1);
    let taper = hann(w);
    let [lo, hi] = cfg.band;
    let mut per_window = Vec::new();
    let mut skipped = 0;
    let mut s = 0;
    while s + w <= wave.samples.len() {
        let t = 0.5 * (wave.timestamps[s] + wave.timestamps[s + w - 1]);
        let f_ref = interpolate(reference, t)? / 60.0;
        if !(f_ref >= 0.5 * lo && f_ref <= hi) {
            skipped += 1;
            s += hop;
            continue;
        }
        let spec = Spectrum::of(&wave.samples[s..s + w], &taper, wave.rate, cfg.nfft);
        let (mut sig, mut noise) = (0.0, 0.0);
        for k in spec.bins(lo, hi) {
            let f = spec.freq(k);
            if (f - f_ref).abs() <= cfg.half_width || (f - 2.0 * f_ref).abs() <= cfg.half_width {
                sig += spec.power[k];
            } else {
                noise += spec.power[k];
            }
        }
        let db = if sig > 0.0 && noise > 0.0 {
            (10.0 * (sig / noise).log10()).clamp(-cfg.clamp_db, cfg.clamp_db)
        } else if sig > 0.0 {
            cfg.clamp_db
        } else {
            -cfg.clamp_db
        };
        per_window.push((t, db));
        s += hop;
    }
    if per_window.is_empty() {
        return Err(domain("no SNR window had a usable reference"));
    }
    let mean_db = per_window.iter().map(|p| p.1).sum::<f64>() / per_window.len() as f64;
    Ok(SnrResult { mean_db, per_window, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `P(X ≤ x)`.
    Cdf,
    /// `P(X ≥ x)`.
    Ccdf,
}

/// Empirical (C)CDF evaluated at each sorted sample.
pub fn cdf_points(values: &[f64], direction: Direction) -> Result<Vec<(f64, f64)>> {
    if values.is_empty() {
        return Err(domain("cannot build a distribution from no values"));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter()
        .map(|&x| {
            let p = match direction {
                Direction::Cdf => v.partition_point(|&y| y <= x),
                Direction::Ccdf => v.len() - v.partition_point(|&y| y < x),
            };
            (x, p as f64 / n)
        })
        .collect())
}

/// Evaluates a distribution produced by `cdf_points` at an arbitrary `x`.
pub fn eval_distribution(values: &[f64], direction: Direction, x: f64) -> f64 {
    let n = values.len() as f64;
    let count = match direction {
        Direction::Cdf => values.iter().filter(|&&y| y <= x).count(),
        Direction::Ccdf => values.iter().filter(|&&y| y >= x).count(),
    };
    count as f64 / n
}

/// One row of the per-window table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRow {
    pub t: f64,
    pub hr_est: f64,
    pub hr_ref: f64,
    pub abs_err: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mae: f64,
    pub success_rate: f64,
    pub snr: f64,
    pub per_window: Vec<WindowRow>,
    /// CDF of the per-window absolute errors.
    pub cdf_points: Vec<(f64, f64)>,
}

impl MetricsReport {
    pub fn compute(
        est: &HrSeries,
        reference: &HrSeries,
        wave: &PulseWave,
        tol: f64,
        snr: &SnrConfig,
    ) -> Result<Self> {
        let errs = abs_errors(est, reference)?;
        let per_window = est
            .estimates
            .iter()
            .zip(&errs)
            .map(|(e, &abs_err)| {
                Ok(WindowRow { t: e.t, hr_est: e.bpm, hr_ref: interpolate(reference, e.t)?, abs_err })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            mae: errs.iter().sum::<f64>() / errs.len() as f64,
            success_rate: success_rate(est, reference, tol)?,
            snr: snr_db(wave, reference, snr)?.mean_db,
            cdf_points: cdf_points(&errs, Direction::Cdf)?,
            per_window,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.mae.is_finite() && self.success_rate.is_finite() && self.snr.is_finite()
    }
}
