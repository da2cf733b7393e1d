//! Butterworth band-pass design as second-order sections and zero-phase filtering.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{domain, Result};

/// One biquad `[b0, b1, b2, 1, a1, a2]`.
pub type Section = [f64; 6];

/// Digital Butterworth band-pass with an `order`-pole analog prototype
/// (`2·order` poles after the band transform), bilinear transform with pre-warping.
pub fn butter_bandpass(order: usize, low_hz: f64, high_hz: f64, fs: f64) -> Result<Vec<Section>> {
    let nyq = 0.5 * fs;
    if order == 0 || !(0.0 < low_hz && low_hz < high_hz && high_hz < nyq) {
        return Err(domain(format!(
            "band [{low_hz}, {high_hz}] Hz must lie inside (0, {nyq}) Hz with order >= 1"
        )));
    }
    // Analog frequencies after pre-warping, with the sample rate normalised to 2.
    let warp = |f: f64| 4.0 * (PI * (f / nyq) / 2.0).tan();
    let (w1, w2) = (warp(low_hz), warp(high_hz));
    let wo = (w1 * w2).sqrt();
    let bw = w2 - w1;

    let n = order as f64;
    let mut poles_upper = Vec::with_capacity(order);
    for m in 0..order {
        // Prototype poles -exp(iπ(2m - n + 1)/(2n)), band-transformed.
        let theta = PI * (2.0 * m as f64 - n + 1.0) / (2.0 * n);
        let p = -Complex64::from_polar(1.0, theta);
        let p_lp = p * (bw / 2.0);
        let disc = (p_lp * p_lp - wo * wo).sqrt();
        for p_bp in [p_lp + disc, p_lp - disc] {
            if p_bp.im > 0.0 {
                poles_upper.push(p_bp);
            }
        }
    }
    // Each conjugate pair of analog poles becomes one section; zeros go to z = ±1.
    let fs2 = 4.0;
    let mut sections: Vec<Section> = poles_upper
        .iter()
        .map(|p| {
            let z = (fs2 + p) / (fs2 - p);
            [1.0, 0.0, -1.0, 1.0, -2.0 * z.re, z.norm_sqr()]
        })
        .collect();
    let mut denom = Complex64::new(1.0, 0.0);
    for p in &poles_upper {
        denom *= (fs2 - p) * (fs2 - p.conj());
    }
    let numer = Complex64::new(fs2, 0.0).powi(order as i32);
    let gain = bw.powi(order as i32) * (numer / denom).re;
    for c in &mut sections[0][..3] {
        *c *= gain;
    }
    Ok(sections)
}

/// Transposed direct form II cascade with optional initial states.
pub fn sosfilt(sos: &[Section], x: &[f64], zi: Option<&[[f64; 2]]>) -> Vec<f64> {
    let mut state: Vec<[f64; 2]> = match zi {
        Some(z) => z.to_vec(),
        None => vec![[0.0; 2]; sos.len()],
    };
    x.iter()
        .map(|&sample| {
            let mut v = sample;
            for (s, z) in sos.iter().zip(state.iter_mut()) {
                let y = s[0] * v + z[0];
                z[0] = s[1] * v - s[4] * y + z[1];
                z[1] = s[2] * v - s[5] * y;
                v = y;
            }
            v
        })
        .collect()
}

/// Section states that make the cascade start in steady state for a unit step.
pub fn sosfilt_zi(sos: &[Section]) -> Vec<[f64; 2]> {
    let mut scale = 1.0;
    sos.iter()
        .map(|s| {
            let g = (s[0] + s[1] + s[2]) / (1.0 + s[4] + s[5]);
            let z2 = s[2] - s[5] * g;
            let z1 = s[1] - s[4] * g + z2;
            let zi = [scale * z1, scale * z2];
            scale *= g;
            zi
        })
        .collect()
}

/// Default pad length for a cascade: three times the overall filter order plus one.
pub fn default_padlen(sos: &[Section]) -> usize {
    let b2_zero = sos.iter().filter(|s| s[2] == 0.0).count();
    let a2_zero = sos.iter().filter(|s| s[5] == 0.0).count();
    3 * (2 * sos.len() + 1 - b2_zero.min(a2_zero))
}

/// Forward-backward filtering with odd-extension padding and steady-state initial
/// conditions.
pub fn sosfiltfilt(sos: &[Section], x: &[f64]) -> Result<Vec<f64>> {
    let pad = default_padlen(sos);
    let n = x.len();
    if n <= pad {
        return Err(domain(format!("signal of {n} samples is too short for pad length {pad}")));
    }
    let mut ext = Vec::with_capacity(n + 2 * pad);
    ext.extend((1..=pad).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((0..pad).map(|i| 2.0 * x[n - 1] - x[n - 2 - i]));

    let zi = sosfilt_zi(sos);
    let scaled = |k: f64| zi.iter().map(|z| [z[0] * k, z[1] * k]).collect::<Vec<_>>();
    let mut y = sosfilt(sos, &ext, Some(&scaled(ext[0])));
    y.reverse();
    let mut y = sosfilt(sos, &y, Some(&scaled(y[0])));
    y.reverse();
    Ok(y[pad..pad + n].to_vec())
}
