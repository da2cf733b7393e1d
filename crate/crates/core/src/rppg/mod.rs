//! Pulse extraction from patch traces: per-window normalization and band-pass, POS
//! projection, top-K patch fusion, overlap-add splicing and spectral HR estimation.

pub mod filter;
pub mod spectrum;

use serde::{Deserialize, Serialize};

use crate::error::{config, domain, Error, Result};
use crate::scene::{PatchIndex, Roi, CHANNELS};
use crate::sensor::Frame;

pub use spectrum::{hann, Spectrum};

fn default_window() -> f64 {
    10.0
}
fn default_band() -> [f64; 2] {
    [0.6, 3.0]
}
fn default_order() -> usize {
    2
}
fn default_nfft() -> usize {
    4096
}
fn default_top_k_fraction() -> f64 {
    0.25
}
fn default_peak_half_width() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Extraction and HR window length, seconds. Hop is half the window.
    #[serde(default = "default_window")]
    pub window_s: f64,
    /// Pass band, Hz.
    #[serde(default = "default_band")]
    pub band: [f64; 2],
    /// Analog prototype order of the band-pass.
    #[serde(default = "default_order")]
    pub filter_order: usize,
    #[serde(default = "default_nfft")]
    pub nfft: usize,
    /// Fixed top-K count; defaults to `ceil(top_k_fraction · ROI size)`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub top_k: Option<usize>,
    #[serde(default = "default_top_k_fraction")]
    pub top_k_fraction: f64,
    /// Half-width around a patch's own peak counted as signal when ranking patches, Hz.
    #[serde(default = "default_peak_half_width")]
    pub peak_half_width: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            window_s: default_window(),
            band: default_band(),
            filter_order: default_order(),
            nfft: default_nfft(),
            top_k: None,
            top_k_fraction: default_top_k_fraction(),
            peak_half_width: default_peak_half_width(),
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_s >= 4.0 && self.window_s.is_finite()) {
            return Err(config("pipeline window must be >= 4 s"));
        }
        if !(self.band[0] > 0.0 && self.band[0] < self.band[1]) {
            return Err(config("pipeline band must satisfy 0 < low < high"));
        }
        if self.filter_order == 0 || self.nfft < 16 {
            return Err(config("filter order must be >= 1 and nfft >= 16"));
        }
        if self.top_k == Some(0) || !(self.top_k_fraction > 0.0 && self.top_k_fraction <= 1.0) {
            return Err(config("top-K must be >= 1 and its fraction in (0, 1]"));
        }
        Ok(())
    }

    /// Window length in samples at `rate`, rounded to an even count.
    pub fn window_samples(&self, rate: f64) -> usize {
        let n = (self.window_s * rate).round() as usize;
        n + n % 2
    }

    pub fn k_for(&self, roi_len: usize) -> usize {
        self.top_k
            .unwrap_or_else(|| (self.top_k_fraction * roi_len as f64).ceil() as usize)
            .max(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchTrace {
    pub patch: PatchIndex,
    /// Per-frame RGB means.
    pub samples: Vec<[f64; CHANNELS]>,
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseWave {
    pub samples: Vec<f64>,
    /// Hz.
    pub rate: f64,
    pub timestamps: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HrEstimate {
    /// Window centre, seconds.
    pub t: f64,
    pub bpm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct HrSeries {
    pub estimates: Vec<HrEstimate>,
}

impl HrSeries {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        Self {
            estimates: pairs.into_iter().map(|(t, bpm)| HrEstimate { t, bpm }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }
}

/// Sample rate implied by uniformly spaced timestamps.
fn stream_rate(timestamps: &[f64]) -> Result<f64> {
    if timestamps.len() < 2 {
        return Err(domain("need at least two frames to infer the stream rate"));
    }
    let span = timestamps[timestamps.len() - 1] - timestamps[0];
    if !(span > 0.0) {
        return Err(domain("frame timestamps must increase"));
    }
    Ok((timestamps.len() - 1) as f64 / span)
}

/// One trace per ROI patch from a 15 Hz output stream.
pub fn extract_patch_traces(frames: &[Frame], roi: &Roi) -> Result<Vec<PatchTrace>> {
    let first = frames.first().ok_or_else(|| domain("empty frame stream"))?;
    if roi.is_empty() || !roi.within(first.grid) {
        return Err(domain("roi must be non-empty and inside the frame grid"));
    }
    if frames.iter().any(|f| f.grid != first.grid) {
        return Err(Error::Dimension("frames in a stream must share one grid".into()));
    }
    let timestamps: Vec<f64> = frames.iter().map(|f| f.timestamp).collect();
    Ok(roi
        .patches()
        .iter()
        .map(|&p| PatchTrace {
            patch: p,
            samples: frames.iter().map(|f| f.patch(p)).collect(),
            timestamps: timestamps.clone(),
        })
        .collect())
}

/// Start offsets of full windows of `w` samples with hop `w/2` over `n` samples.
pub fn window_starts(n: usize, w: usize) -> Vec<usize> {
    let hop = (w / 2).max(1);
    if w == 0 || n < w {
        return Vec::new();
    }
    (0..=(n - w) / hop).map(|i| i * hop).collect()
}

/// Per window: `c / mean(c) - 1` per channel, then zero-phase band-pass.
pub fn window_normalize_filter(
    trace: &PatchTrace,
    rate: f64,
    window_s: f64,
    band: [f64; 2],
    order: usize,
) -> Result<Vec<Vec<[f64; CHANNELS]>>> {
    if window_s < 4.0 {
        return Err(domain("window must be at least 4 s"));
    }
    let w = {
        let n = (window_s * rate).round() as usize;
        n + n % 2
    };
    if w > trace.samples.len() {
        return Err(domain(format!(
            "window of {w} samples exceeds trace of {}",
            trace.samples.len()
        )));
    }
    let sos = filter::butter_bandpass(order, band[0], band[1], rate)?;
    window_starts(trace.samples.len(), w)
        .into_iter()
        .map(|s| {
            let seg = &trace.samples[s..s + w];
            let mut out = vec![[0.0; CHANNELS]; w];
            for c in 0..CHANNELS {
                let mean = seg.iter().map(|v| v[c]).sum::<f64>() / w as f64;
                let norm: Vec<f64> = if mean > 0.0 {
                    seg.iter().map(|v| v[c] / mean - 1.0).collect()
                } else {
                    vec![0.0; w]
                };
                let filtered = filter::sosfiltfilt(&sos, &norm)?;
                for (o, v) in out.iter_mut().zip(filtered) {
                    o[c] = v;
                }
            }
            Ok(out)
        })
        .collect()
}

fn std_dev(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    (x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt()
}

/// Plane-orthogonal-to-skin projection of one normalized RGB window.
pub fn pos_project(window: &[[f64; CHANNELS]]) -> Vec<f64> {
    if window.is_empty() {
        return Vec::new();
    }
    let s1: Vec<f64> = window.iter().map(|v| v[1] - v[2]).collect();
    let s2: Vec<f64> = window.iter().map(|v| v[1] + v[2] - 2.0 * v[0]).collect();
    let (d1, d2) = (std_dev(&s1), std_dev(&s2));
    let alpha = if d2 > 0.0 { d1 / d2 } else { 0.0 };
    let h: Vec<f64> = s1.iter().zip(&s2).map(|(a, b)| a + alpha * b).collect();
    let mean = h.iter().sum::<f64>() / h.len() as f64;
    h.into_iter().map(|v| v - mean).collect()
}

/// Self-referenced spectral SNR: power within `half_width` of the strongest in-band bin
/// against the rest of the band. Silent segments score `-inf`.
pub fn segment_snr(seg: &[f64], rate: f64, band: [f64; 2], half_width: f64, nfft: usize) -> f64 {
    let spec = Spectrum::of(seg, &hann(seg.len()), rate, nfft);
    let Some(peak) = spec.peak(band[0], band[1]) else {
        return f64::NEG_INFINITY;
    };
    let f0 = spec.freq(peak);
    let (mut sig, mut noise) = (0.0, 0.0);
    for k in spec.bins(band[0], band[1]) {
        if (spec.freq(k) - f0).abs() <= half_width {
            sig += spec.power[k];
        } else {
            noise += spec.power[k];
        }
    }
    if !(sig > 0.0) {
        f64::NEG_INFINITY
    } else if noise > 0.0 {
        sig / noise
    } else {
        f64::INFINITY
    }
}

/// Averages the `k` highest-SNR segments after sign-aligning them to the best one.
pub fn select_top_k(
    segments: &[Vec<f64>],
    rate: f64,
    band: [f64; 2],
    half_width: f64,
    nfft: usize,
    k: usize,
) -> Result<Vec<f64>> {
    let first = segments.first().ok_or_else(|| domain("no segments to combine"))?;
    if segments.iter().any(|s| s.len() != first.len()) {
        return Err(Error::Dimension("segments must share one length".into()));
    }
    let k = k.clamp(1, segments.len());
    let mut ranked: Vec<(usize, f64)> = segments
        .iter()
        .enumerate()
        .map(|(i, s)| (i, segment_snr(s, rate, band, half_width, nfft)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let best = &segments[ranked[0].0];
    let mut out = vec![0.0; first.len()];
    for &(i, _) in &ranked[..k] {
        let seg = &segments[i];
        let dot: f64 = seg.iter().zip(best).map(|(a, b)| a * b).sum();
        let sign = if dot < 0.0 { -1.0 } else { 1.0 };
        for (o, v) in out.iter_mut().zip(seg) {
            *o += sign * v / k as f64;
        }
    }
    Ok(out)
}

/// Hann-weighted overlap-add of successive windows spaced `hop` samples apart.
pub fn splice_overlap_add(segments: &[Vec<f64>], hop: usize) -> Result<Vec<f64>> {
    let first = segments.first().ok_or_else(|| domain("no segments to splice"))?;
    let w = first.len();
    if segments.iter().any(|s| s.len() != w) {
        return Err(domain("segments must share one length"));
    }
    if w == 0 || 2 * hop != w {
        return Err(domain(format!("hop {hop} must be half the window length {w}")));
    }
    let win = hann(w);
    let mut out = vec![0.0; hop * (segments.len() - 1) + w];
    for (j, seg) in segments.iter().enumerate() {
        for (i, (v, g)) in seg.iter().zip(&win).enumerate() {
            out[j * hop + i] += v * g;
        }
    }
    Ok(out)
}

/// Windowed spectral-peak heart rate, one estimate per window centre.
pub fn estimate_hr(
    wave: &PulseWave,
    window_s: f64,
    band: [f64; 2],
    nfft: usize,
) -> Result<HrSeries> {
    let n = (window_s * wave.rate).round() as usize;
    let w = n + n % 2;
    if w < 2 || w > wave.samples.len() {
        return Err(domain(format!(
            "HR window of {w} samples exceeds wave of {}",
            wave.samples.len()
        )));
    }
    let taper = hann(w);
    let estimates = window_starts(wave.samples.len(), w)
        .into_iter()
        .map(|s| {
            let spec = Spectrum::of(&wave.samples[s..s + w], &taper, wave.rate, nfft);
            let k = spec.peak(band[0], band[1]).ok_or_else(|| domain("band has no FFT bins"))?;
            Ok(HrEstimate {
                t: 0.5 * (wave.timestamps[s] + wave.timestamps[s + w - 1]),
                bpm: 60.0 * spec.freq(k),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(HrSeries { estimates })
}

/// Output of the full pipeline over one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub wave: PulseWave,
    pub hr: HrSeries,
}

/// Frames to pulse wave and HR series.
pub fn run_pipeline(frames: &[Frame], roi: &Roi, cfg: &PipelineConfig) -> Result<PipelineOutput> {
    let traces = extract_patch_traces(frames, roi)?;
    let rate = stream_rate(&traces[0].timestamps)?;
    let w = cfg.window_samples(rate);
    let per_patch: Vec<Vec<Vec<f64>>> = traces
        .iter()
        .map(|tr| {
            window_normalize_filter(tr, rate, cfg.window_s, cfg.band, cfg.filter_order)
                .map(|wins| wins.iter().map(|win| pos_project(win)).collect())
        })
        .collect::<Result<_>>()?;
    let k = cfg.k_for(roi.len());
    let windows = per_patch[0].len();
    let combined = (0..windows)
        .map(|j| {
            let segs: Vec<Vec<f64>> = per_patch.iter().map(|p| p[j].clone()).collect();
            select_top_k(&segs, rate, cfg.band, cfg.peak_half_width, cfg.nfft, k)
        })
        .collect::<Result<Vec<_>>>()?;
    let samples = splice_overlap_add(&combined, w / 2)?;
    let wave = PulseWave {
        timestamps: traces[0].timestamps[..samples.len()].to_vec(),
        samples,
        rate,
    };
    let hr = estimate_hr(&wave, cfg.window_s, cfg.band, cfg.nfft)?;
    Ok(PipelineOutput { wave, hr })
}
