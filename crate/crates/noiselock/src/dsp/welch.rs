use std::io::Write;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};

/// One-sided power spectral density on a uniform frequency grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub freqs: Vec<f64>,
    pub psd: Vec<f64>,
    pub segments: usize,
}

impl Spectrum {
    pub fn bin_width(&self) -> f64 {
        if self.freqs.len() > 1 {
            self.freqs[1] - self.freqs[0]
        } else {
            0.0
        }
    }

    /// Mean PSD over bins with `lo ≤ f ≤ hi`; `None` if no bin falls inside.
    pub fn band_mean(&self, lo: f64, hi: f64) -> Option<f64> {
        let (s, n) = self
            .freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .fold((0.0, 0usize), |(s, n), (_, p)| (s + p, n + 1));
        (n > 0).then(|| s / n as f64)
    }

    /// Integrated power `Σ PSD · Δf` over `lo ≤ f ≤ hi`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        let df = self.bin_width();
        self.freqs
            .iter()
            .zip(&self.psd)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * df)
            .sum()
    }

    /// Two columns: frequency in Hz and `10 log₁₀(PSD / reference)`.
    pub fn write_csv<W: Write>(&self, mut w: W, reference: f64) -> Result<()> {
        writeln!(w, "freq_hz,psd_db")?;
        for (f, p) in self.freqs.iter().zip(&self.psd) {
            writeln!(w, "{},{}", f, 10.0 * (p / reference).log10())?;
        }
        Ok(())
    }
}

/// Welch's averaged periodogram with a periodic Hann window.
///
/// `PSD[k] = c_k Σ_segments |X_k|² / (fs Σ w² · segments)` with `c_k = 2`
/// except at DC and Nyquist, so unit-variance white noise reads `2/fs`
/// and `Σ PSD · Δf` recovers the variance.
pub fn welch_psd(input: &[f64], fs: f64, segment_len: usize, overlap: f64) -> Result<Spectrum> {
    if input.is_empty() {
        return Err(Error::Input("welch_psd needs a non-empty series".into()));
    }
    if segment_len < 2 || segment_len > input.len() {
        return Err(Error::Input(format!(
            "segment length {segment_len} must lie in [2, {}]",
            input.len()
        )));
    }
    if !(0.0..1.0).contains(&overlap) {
        return Err(Error::param("overlap", format!("{overlap} must lie in [0, 1)")));
    }
    if !(fs > 0.0) {
        return Err(Error::param("fs", "must be positive"));
    }
    let l = segment_len;
    let step = ((l as f64 * (1.0 - overlap)).round() as usize).max(1);
    let window: Vec<f64> = (0..l)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / l as f64).cos())
        .collect();
    let wss: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(l);
    let half = l / 2 + 1;
    let mut acc = vec![0.0; half];
    let mut buf = vec![Complex64::new(0.0, 0.0); l];
    let mut segments = 0;
    let mut start = 0;
    while start + l <= input.len() {
        for ((b, x), w) in buf.iter_mut().zip(&input[start..start + l]).zip(&window) {
            *b = Complex64::new(x * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }
    let norm = 1.0 / (fs * wss * segments as f64);
    let psd = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let edge = k == 0 || (l % 2 == 0 && k == l / 2);
            a * norm * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let freqs = (0..half).map(|k| k as f64 * fs / l as f64).collect();
    Ok(Spectrum { freqs, psd, segments })
}
