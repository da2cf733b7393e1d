//! Plot-ready CSV derived from a finished report directory.

use std::path::{Path, PathBuf};

use exposure_rppg::metrics::Direction;
use exposure_rppg::rppg::spectrum::{hann, Spectrum};
use exposure_rppg::rppg::window_starts;
use exposure_rppg::strategy::FrameLogRow;
use serde::{Deserialize, Serialize};

use crate::error::{HarnessError, Result};
use crate::experiment::cell_slug;
use crate::report::{cell_dir, csv_bytes, distribution_rows, read_csv, write_atomic, PulseRow, Summary};

pub const PLOTS_DIR: &str = "plots";
pub const SPECTROGRAM_NFFT: usize = 1024;
pub const SPECTROGRAM_MAX_HZ: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlotKind {
    Cdf,
    Timeseries,
    Spectrogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfRow {
    pub metric: String,
    pub strategy: String,
    pub x: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub t: f64,
    pub exposure_ms: f64,
    pub mu_roi: f64,
    pub mu_fullframe: f64,
    pub saturated_patch_count: usize,
    /// Empty past the last complete extraction window.
    pub pulse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectrogramRow {
    /// Window centre, s.
    pub t: f64,
    pub f: f64,
    pub magnitude: f64,
}

/// Hann-windowed FFT magnitudes over `[0, max_hz]` for windows of `window_s` at half
/// overlap.
pub fn spectrogram(
    samples: &[f64],
    timestamps: &[f64],
    rate: f64,
    window_s: f64,
    nfft: usize,
    max_hz: f64,
) -> Vec<SpectrogramRow> {
    let n = (window_s * rate).round() as usize;
    let w = n + n % 2;
    if w < 2 || w > samples.len() {
        return Vec::new();
    }
    let taper = hann(w);
    let mut rows = Vec::new();
    for s in window_starts(samples.len(), w) {
        let spec = Spectrum::of(&samples[s..s + w], &taper, rate, nfft);
        let t = 0.5 * (timestamps[s] + timestamps[s + w - 1]);
        for k in spec.bins(0.0, max_hz) {
            rows.push(SpectrogramRow { t, f: spec.freq(k), magnitude: spec.power[k].sqrt() });
        }
    }
    rows
}

/// Writes plot data of `kind` under `<report>/plots`; returns the files written.
pub fn emit_plot_data(report: &Path, kind: PlotKind) -> Result<Vec<PathBuf>> {
    let summary = Summary::read(report)?;
    let plots = report.join(PLOTS_DIR);
    let mut written = Vec::new();
    match kind {
        PlotKind::Cdf => {
            let series: [(&str, fn(&crate::experiment::CellSummary) -> f64, Direction); 3] = [
                ("mae_bpm", |r| r.mae_bpm, Direction::Cdf),
                ("success_rate_pct", |r| r.success_rate_pct, Direction::Ccdf),
                ("snr_db", |r| r.snr_db, Direction::Ccdf),
            ];
            let mut rows = Vec::new();
            for (metric, value, dir) in series {
                for d in distribution_rows(&summary.cells, value, dir)? {
                    rows.push(CdfRow { metric: metric.into(), strategy: d.strategy, x: d.x, p: d.p });
                }
            }
            let path = plots.join("cdf.csv");
            write_atomic(&path, &csv_bytes(rows)?)?;
            written.push(path);
        }
        PlotKind::Timeseries => {
            for c in &summary.cells {
                let slug = cell_slug(&c.scenario, &c.strategy, c.seed);
                let dir = cell_dir(report, &slug);
                let frames: Vec<FrameLogRow> = read_csv(&dir.join("frames.csv"))?;
                let pulse: Vec<PulseRow> = read_csv(&dir.join("pulse.csv"))?;
                let rows = frames.iter().enumerate().map(|(i, f)| TimeseriesRow {
                    t: f.t,
                    exposure_ms: f.exposure_ms,
                    mu_roi: f.mu_roi,
                    mu_fullframe: f.mu_fullframe,
                    saturated_patch_count: f.saturated_patch_count,
                    pulse: pulse.get(i).map(|p| p.value),
                });
                let path = plots.join("timeseries").join(format!("{slug}.csv"));
                write_atomic(&path, &csv_bytes(rows)?)?;
                written.push(path);
            }
        }
        PlotKind::Spectrogram => {
            for c in &summary.cells {
                let slug = cell_slug(&c.scenario, &c.strategy, c.seed);
                let pulse: Vec<PulseRow> = read_csv(&cell_dir(report, &slug).join("pulse.csv"))?;
                let (t, v): (Vec<f64>, Vec<f64>) = pulse.iter().map(|p| (p.t, p.value)).unzip();
                if !(c.frame_rate_hz > 0.0) {
                    return Err(HarnessError::Runtime(format!("cell {slug} has no frame rate")));
                }
                let rows = spectrogram(
                    &v,
                    &t,
                    c.frame_rate_hz,
                    summary.pipeline.window_s,
                    SPECTROGRAM_NFFT,
                    SPECTROGRAM_MAX_HZ,
                );
                let path = plots.join("spectrogram").join(format!("{slug}.csv"));
                write_atomic(&path, &csv_bytes(rows)?)?;
                written.push(path);
            }
        }
    }
    Ok(written)
}
