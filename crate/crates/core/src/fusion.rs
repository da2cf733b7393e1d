//! Multi-exposure region fusion over the patch grid of one triplet cycle.

use serde::{Deserialize, Serialize};

use crate::error::{config, Error, Result};
use crate::scene::CHANNELS;
use crate::sensor::{Frame, StreamTag};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionMode {
    /// One-hot weights.
    #[default]
    Hard,
    /// Linear blend across `smooth_width` codes centred on each threshold.
    Smooth,
}

fn default_tau_low() -> f64 {
    30.0
}
fn default_tau_high() -> f64 {
    220.0
}
fn default_smooth_width() -> f64 {
    10.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FusionConfig {
    #[serde(default = "default_tau_low")]
    pub tau_low: f64,
    #[serde(default = "default_tau_high")]
    pub tau_high: f64,
    #[serde(default)]
    pub mode: FusionMode,
    #[serde(default = "default_smooth_width")]
    pub smooth_width: f64,
    /// Scale substituted codes by `T_opt / T_source` before blending.
    #[serde(default)]
    pub rescale_by_exposure: bool,
}

impl Default for FusionConfig {
    fn default() -> Self {
        Self {
            tau_low: default_tau_low(),
            tau_high: default_tau_high(),
            mode: FusionMode::Hard,
            smooth_width: default_smooth_width(),
            rescale_by_exposure: false,
        }
    }
}

impl FusionConfig {
    pub fn validate(&self, i_max: f64) -> Result<()> {
        if !(self.tau_low > 0.0 && self.tau_low < self.tau_high && self.tau_high < i_max) {
            return Err(config("fusion thresholds must satisfy 0 < tau_low < tau_high < i_max"));
        }
        if self.mode == FusionMode::Smooth
            && !(self.smooth_width > 0.0 && self.smooth_width < self.tau_high - self.tau_low)
        {
            return Err(config("smooth_width must be > 0 and narrower than tau_high - tau_low"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightTriple {
    pub w_l: f64,
    pub w_h: f64,
    pub w_opt: f64,
}

impl WeightTriple {
    const LOW: Self = Self { w_l: 1.0, w_h: 0.0, w_opt: 0.0 };
    const HIGH: Self = Self { w_l: 0.0, w_h: 1.0, w_opt: 0.0 };
    const OPT: Self = Self { w_l: 0.0, w_h: 0.0, w_opt: 1.0 };
}

/// Source weights for a patch whose optimal-frame code is `i_opt`.
pub fn fusion_weights(i_opt: f64, cfg: &FusionConfig) -> WeightTriple {
    match cfg.mode {
        FusionMode::Hard => {
            if i_opt < cfg.tau_low {
                WeightTriple::HIGH
            } else if i_opt > cfg.tau_high {
                WeightTriple::LOW
            } else {
                WeightTriple::OPT
            }
        }
        FusionMode::Smooth => {
            let half = 0.5 * cfg.smooth_width;
            let ramp = |x: f64| (x / cfg.smooth_width + 0.5).clamp(0.0, 1.0);
            if i_opt < cfg.tau_low + half {
                let w_opt = ramp(i_opt - cfg.tau_low);
                WeightTriple { w_l: 0.0, w_h: 1.0 - w_opt, w_opt }
            } else if i_opt > cfg.tau_high - half {
                let w_l = ramp(i_opt - cfg.tau_high);
                WeightTriple { w_l, w_h: 0.0, w_opt: 1.0 - w_l }
            } else {
                WeightTriple::OPT
            }
        }
    }
}

/// Per-patch blend of the three frames of one cycle, weighted by the optimal frame's
/// channel-mean code.
pub fn fuse(low: &Frame, high: &Frame, opt: &Frame, cfg: &FusionConfig) -> Result<Frame> {
    if low.grid != opt.grid || high.grid != opt.grid {
        return Err(Error::Dimension(format!(
            "fusion frames disagree on grid shape: {:?}, {:?}, {:?}",
            low.grid, high.grid, opt.grid
        )));
    }
    let (scale_l, scale_h) = if cfg.rescale_by_exposure {
        (opt.exposure_ms / low.exposure_ms, opt.exposure_ms / high.exposure_ms)
    } else {
        (1.0, 1.0)
    };
    let i_max = opt.i_max;
    let intensities = (0..opt.intensities.len())
        .map(|i| {
            let w = fusion_weights(opt.luma(i), cfg);
            let mut out = [0.0; CHANNELS];
            for (c, v) in out.iter_mut().enumerate() {
                let x = w.w_l * scale_l * low.intensities[i][c]
                    + w.w_h * scale_h * high.intensities[i][c]
                    + w.w_opt * opt.intensities[i][c];
                *v = x.round().clamp(0.0, i_max);
            }
            out
        })
        .collect();
    Ok(Frame {
        grid: opt.grid,
        intensities,
        exposure_ms: opt.exposure_ms,
        timestamp: opt.timestamp,
        tag: StreamTag::Fused,
        i_max,
    })
}
