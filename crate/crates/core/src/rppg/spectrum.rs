//! Windowed power spectra on a zero-padded FFT grid.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

/// Periodic Hann window `0.5·(1 - cos(2πn/N))`.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 * (1.0 - (2.0 * PI * i as f64 / n as f64).cos()))
        .collect()
}

/// One-sided spectrum of a tapered, zero-padded signal.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    /// `|X_k|²` for `k = 0..=nfft/2`.
    pub power: Vec<f64>,
    /// Bin spacing in Hz.
    pub df: f64,
}

impl Spectrum {
    /// Mean-removes `x`, applies `taper` (same length), zero-pads to at least `nfft`
    /// (rounded up to cover the signal) and transforms.
    pub fn of(x: &[f64], taper: &[f64], rate: f64, nfft: usize) -> Self {
        let nfft = nfft.max(x.len()).max(2);
        let mean = x.iter().sum::<f64>() / x.len().max(1) as f64;
        let mut buf: Vec<Complex64> = x
            .iter()
            .zip(taper)
            .map(|(v, w)| Complex64::new((v - mean) * w, 0.0))
            .collect();
        buf.resize(nfft, Complex64::new(0.0, 0.0));
        FftPlanner::new().plan_fft_forward(nfft).process(&mut buf);
        Self {
            power: buf[..=nfft / 2].iter().map(|c| c.norm_sqr()).collect(),
            df: rate / nfft as f64,
        }
    }

    pub fn freq(&self, k: usize) -> f64 {
        k as f64 * self.df
    }

    /// Bins with frequency inside `[lo, hi]`.
    pub fn bins(&self, lo: f64, hi: f64) -> impl Iterator<Item = usize> + '_ {
        (0..self.power.len()).filter(move |&k| {
            let f = self.freq(k);
            f >= lo - 1e-12 && f <= hi + 1e-12
        })
    }

    /// Strongest bin inside `[lo, hi]` (lowest index on ties).
    pub fn peak(&self, lo: f64, hi: f64) -> Option<usize> {
        self.bins(lo, hi).fold(None, |best, k| match best {
            Some(b) if self.power[b] >= self.power[k] => Some(b),
            _ => Some(k),
        })
    }

    pub fn total(&self) -> f64 {
        self.power.iter().sum()
    }
}
