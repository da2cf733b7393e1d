//! Report files: summary JSON, per-cell CSV logs and distribution point files.
//!
//! Layout under the output directory:
//!
//! ```text
//! summary.json
//! cdf_mae.csv  ccdf_sr.csv  ccdf_snr.csv  cdf_abs_err.csv
//! cells/<scenario>__<strategy>__s<seed>/{frames,windows,pulse,cycles}.csv
//! ```

use std::io::Write;
use std::path::{Path, PathBuf};

use exposure_rppg::controller::CycleRecord;
use exposure_rppg::metrics::{cdf_points, Direction, SnrConfig};
use exposure_rppg::rppg::PipelineConfig;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};
use crate::experiment::{CellResult, CellSummary};

pub const SUMMARY_FILE: &str = "summary.json";
pub const CELLS_DIR: &str = "cells";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyAggregate {
    pub strategy: String,
    pub cells: usize,
    pub mean_mae_bpm: f64,
    pub mean_success_rate_pct: f64,
    pub mean_snr_db: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub tolerance_bpm: f64,
    pub pipeline: PipelineConfig,
    pub snr: SnrConfig,
    pub cells: Vec<CellSummary>,
    pub strategies: Vec<StrategyAggregate>,
}

impl Summary {
    pub fn build(cfg: &ExperimentConfig, cells: &[CellResult]) -> Self {
        let rows: Vec<CellSummary> = cells.iter().map(|c| c.summary.clone()).collect();
        let strategies = strategy_order(&rows)
            .into_iter()
            .map(|name| {
                let mine: Vec<&CellSummary> = rows.iter().filter(|r| r.strategy == name).collect();
                let mean = |f: fn(&CellSummary) -> f64| mine.iter().map(|r| f(r)).sum::<f64>() / mine.len() as f64;
                StrategyAggregate {
                    strategy: name,
                    cells: mine.len(),
                    mean_mae_bpm: mean(|r| r.mae_bpm),
                    mean_success_rate_pct: mean(|r| r.success_rate_pct),
                    mean_snr_db: mean(|r| r.snr_db),
                }
            })
            .collect();
        Self {
            tolerance_bpm: cfg.tolerance,
            pipeline: cfg.pipeline.clone(),
            snr: cfg.snr.clone(),
            cells: rows,
            strategies,
        }
    }

    pub fn read(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        serde_json::from_str(&text)
            .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
    }
}

/// Strategy names in first-appearance order.
pub(crate) fn strategy_order(rows: &[CellSummary]) -> Vec<String> {
    let mut names: Vec<String> = Vec::new();
    for r in rows {
        if !names.contains(&r.strategy) {
            names.push(r.strategy.clone());
        }
    }
    names
}

/// Writes `bytes` to a temporary file beside `path` and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| HarnessError::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| HarnessError::io(path, e))?;
    tmp.persist(path).map_err(|e| HarnessError::io(path, e.error))?;
    Ok(())
}

pub fn csv_bytes<R: Serialize>(rows: impl IntoIterator<Item = R>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| HarnessError::Runtime(format!("csv encoding: {e}")))?;
    }
    w.into_inner().map_err(|e| HarnessError::Runtime(format!("csv encoding: {e}")))
}

pub fn read_csv<R: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<R>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))?;
    r.deserialize()
        .collect::<std::result::Result<Vec<R>, _>>()
        .map_err(|e| HarnessError::Runtime(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PulseRow {
    pub t: f64,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRow {
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
    pub flags: String,
}

impl From<&CycleRecord> for CycleRow {
    fn from(c: &CycleRecord) -> Self {
        Self {
            cycle_index: c.cycle_index,
            t: c.t,
            t_l: c.t_l,
            i_l: c.i_l,
            t_h: c.t_h,
            i_h: c.i_h,
            k: c.k,
            b: c.b,
            t_opt: c.t_opt,
            mu_opt: c.mu_opt,
            flags: c.flags.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub strategy: String,
    pub x: f64,
    pub p: f64,
}

/// Per-strategy distribution of `value` over the summary rows.
pub fn distribution_rows(
    rows: &[CellSummary],
    value: fn(&CellSummary) -> f64,
    direction: Direction,
) -> Result<Vec<DistributionRow>> {
    let mut out = Vec::new();
    for name in strategy_order(rows) {
        let values: Vec<f64> = rows.iter().filter(|r| r.strategy == name).map(value).collect();
        for (x, p) in cdf_points(&values, direction)? {
            out.push(DistributionRow { strategy: name.clone(), x, p });
        }
    }
    Ok(out)
}

pub fn cell_dir(out: &Path, slug: &str) -> PathBuf {
    out.join(CELLS_DIR).join(slug)
}

/// Writes the whole report. Every file is written atomically.
pub fn write_report(out: &Path, cfg: &ExperimentConfig, cells: &[CellResult]) -> Result<Summary> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    for cell in cells {
        let dir = cell_dir(out, &cell.slug());
        let ev = &cell.evaluation;
        write_atomic(&dir.join("frames.csv"), &csv_bytes(&ev.run.log)?)?;
        write_atomic(&dir.join("windows.csv"), &csv_bytes(&ev.metrics.per_window)?)?;
        let wave = &ev.pulse.wave;
        let pulse = wave.timestamps.iter().zip(&wave.samples).map(|(&t, &value)| PulseRow { t, value });
        write_atomic(&dir.join("pulse.csv"), &csv_bytes(pulse)?)?;
        if !ev.run.cycles.is_empty() {
            write_atomic(&dir.join("cycles.csv"), &csv_bytes(ev.run.cycles.iter().map(CycleRow::from))?)?;
        }
    }

    let summary = Summary::build(cfg, cells);
    let rows = &summary.cells;
    write_atomic(&out.join("cdf_mae.csv"), &csv_bytes(distribution_rows(rows, |r| r.mae_bpm, Direction::Cdf)?)?)?;
    write_atomic(
        &out.join("ccdf_sr.csv"),
        &csv_bytes(distribution_rows(rows, |r| r.success_rate_pct, Direction::Ccdf)?)?,
    )?;
    write_atomic(&out.join("ccdf_snr.csv"), &csv_bytes(distribution_rows(rows, |r| r.snr_db, Direction::Ccdf)?)?)?;

    let mut pooled = Vec::new();
    for name in strategy_order(rows) {
        let errs: Vec<f64> = cells
            .iter()
            .filter(|c| c.summary.strategy == name)
            .flat_map(|c| c.evaluation.metrics.per_window.iter().map(|w| w.abs_err))
            .collect();
        for (x, p) in cdf_points(&errs, Direction::Cdf)? {
            pooled.push(DistributionRow { strategy: name.clone(), x, p });
        }
    }
    write_atomic(&out.join("cdf_abs_err.csv"), &csv_bytes(pooled)?)?;

    let mut json = serde_json::to_vec_pretty(&summary)
        .map_err(|e| HarnessError::Runtime(format!("summary encoding: {e}")))?;
    json.push(b'\n');
    write_atomic(&out.join(SUMMARY_FILE), &json)?;
    Ok(summary)
}

/// Plain-text table of the per-strategy aggregates.
pub fn format_table(summary: &Summary) -> String {
    let mut s = format!("{:<24} {:>6} {:>10} {:>8} {:>9}\n", "strategy", "cells", "MAE(bpm)", "SR(%)", "SNR(dB)");
    for a in &summary.strategies {
        s += &format!(
            "{:<24} {:>6} {:>10.2} {:>8.1} {:>9.2}\n",
            a.strategy, a.cells, a.mean_mae_bpm, a.mean_success_rate_pct, a.mean_snr_db
        );
    }
    s
}
