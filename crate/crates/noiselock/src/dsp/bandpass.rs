use num_complex::Complex64;
use rustfft::FftPlanner;

use super::filters::{Biquad, Cascade, Filter};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandpassConfig {
    pub f_low: f64,
    pub f_high: f64,
    /// Number of first-order high-pass sections at `f_low`.
    pub low_rollup_order: usize,
    /// Butterworth order of the low-pass at `f_high`.
    pub high_order: usize,
}

impl BandpassConfig {
    pub fn new(f_low: f64, f_high: f64) -> Self {
        Self {
            f_low,
            f_high,
            low_rollup_order: 3,
            high_order: 4,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::param("fs", format!("{fs} must be positive")));
        }
        if !(self.f_low > 0.0 && self.f_low < self.f_high) {
            return Err(Error::param(
                "bandpass.f_low",
                format!("need 0 < f_low < f_high, got {} and {}", self.f_low, self.f_high),
            ));
        }
        if self.f_high >= fs / 2.0 {
            return Err(Error::Sampling(format!(
                "bandpass f_high {} Hz must lie below Nyquist {} Hz",
                self.f_high,
                fs / 2.0
            )));
        }
        if self.low_rollup_order == 0 || self.high_order == 0 {
            return Err(Error::param("bandpass order", "orders must be at least 1"));
        }
        Ok(())
    }

    pub fn center(&self) -> f64 {
        (self.f_low * self.f_high).sqrt()
    }
}

/// Causal band-pass: `low_rollup_order` first-order high-pass sections at
/// `f_low`, a Butterworth low-pass at `f_high`, and a gain that makes the
/// response exactly unity at the geometric centre.
#[derive(Clone, Debug)]
pub struct Bandpass {
    cfg: BandpassConfig,
    fs: f64,
    cascade: Cascade,
}

impl Bandpass {
    pub fn new(cfg: BandpassConfig, fs: f64) -> Result<Self> {
        cfg.validate(fs)?;
        let mut sections = vec![Biquad::highpass1(cfg.f_low, fs); cfg.low_rollup_order];
        sections.extend_from_slice(Cascade::butterworth_lowpass(cfg.high_order, cfg.f_high, fs).sections());
        let raw = Cascade::new(sections);
        let g = 1.0 / raw.response(cfg.center(), fs).norm();
        Ok(Self {
            cfg,
            fs,
            cascade: raw.with_gain(g),
        })
    }

    pub fn config(&self) -> &BandpassConfig {
        &self.cfg
    }

    pub fn response(&self, freq: f64) -> Complex64 {
        self.cascade.response(freq, self.fs)
    }

    /// Group delay `−dφ/dω` at `freq`, by central difference of the phase.
    pub fn group_delay(&self, freq: f64) -> f64 {
        let h = 1e-4 * freq.max(1.0);
        let p1 = self.response(freq + h).arg();
        let p0 = self.response(freq - h).arg();
        let mut d = p1 - p0;
        if d > std::f64::consts::PI {
            d -= 2.0 * std::f64::consts::PI;
        } else if d < -std::f64::consts::PI {
            d += 2.0 * std::f64::consts::PI;
        }
        -d / (2.0 * std::f64::consts::PI * 2.0 * h)
    }

    /// Equivalent noise bandwidth `∫₀^{fs/2} |H|² df`.
    pub fn noise_bandwidth(&self) -> f64 {
        self.power_moments().0
    }

    /// Statistical bandwidth `(∫|H|²)² / ∫|H|⁴`: the bandwidth of the
    /// brick-wall filter whose output power estimates have the same variance.
    pub fn statistical_bandwidth(&self) -> f64 {
        let (m2, m4) = self.power_moments();
        m2 * m2 / m4
    }

    fn power_moments(&self) -> (f64, f64) {
        let n = 1 << 17;
        let df = self.fs / 2.0 / n as f64;
        let (mut m2, mut m4) = (0.0, 0.0);
        for i in 0..n {
            let p = self.response((i as f64 + 0.5) * df).norm_sqr();
            m2 += p;
            m4 += p * p;
        }
        (m2 * df, m4 * df)
    }
}

impl Filter for Bandpass {
    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        self.cascade.process(x)
    }

    fn reset(&mut self) {
        self.cascade.reset();
    }
}

/// Causal band-pass of a whole series.
pub fn bandpass(input: &[f64], cfg: &BandpassConfig, fs: f64) -> Result<Vec<f64>> {
    Ok(Bandpass::new(*cfg, fs)?.process_block(input))
}

/// Offline brick-wall band-pass: zeroes every DFT bin outside
/// `[f_low, f_high]`. Non-causal; for comparison with the analytic model,
/// which assumes hard band edges.
pub fn bandpass_ideal(input: &[f64], cfg: &BandpassConfig, fs: f64) -> Result<Vec<f64>> {
    cfg.validate(fs)?;
    let n = input.len();
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut planner = FftPlanner::new();
    let mut buf: Vec<Complex64> = input.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    planner.plan_fft_forward(n).process(&mut buf);
    for (k, b) in buf.iter_mut().enumerate() {
        let bin = k.min(n - k) as f64 * fs / n as f64;
        if bin < cfg.f_low || bin > cfg.f_high {
            *b = Complex64::new(0.0, 0.0);
        }
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    Ok(buf.iter().map(|c| c.re / n as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn tone(f: f64, fs: f64, n: usize) -> Vec<f64> {
        (0..n).map(|k| (2.0 * PI * f * k as f64 / fs).sin()).collect()
    }

    fn steady_peak(y: &[f64]) -> f64 {
        y[y.len() / 2..].iter().fold(0.0f64, |a, b| a.max(b.abs()))
    }

    #[test]
    fn center_tone_passes() {
        let fs = 1e6;
        let cfg = BandpassConfig::new(2e4, 2e5);
        let y = bandpass(&tone(cfg.center(), fs, 40000), &cfg, fs).unwrap();
        let db = 20.0 * steady_peak(&y).log10();
        assert!(db.abs() < 1.0, "{db}");
    }

    #[test]
    fn decade_below_rollup_attenuates() {
        let fs = 1e6;
        let cfg = BandpassConfig::new(2e4, 2e5);
        let bp = Bandpass::new(cfg, fs).unwrap();
        // Oracle: three analog first-order high-pass sections at a decade
        // below the corner, times the low-pass skirt, normalized at centre.
        let hp = |r: f64| r / (1.0 + r * r).sqrt();
        let r_c = 10f64.sqrt();
        let center = hp(r_c).powi(3) / (1.0 + (r_c / 10.0).powi(8)).sqrt();
        let oracle_db = 60.0 * hp(0.1).log10() - 20.0 * center.log10();
        let got_db = 20.0 * bp.response(2e3).norm().log10();
        assert!(got_db <= -55.0, "{got_db}");
        assert!((got_db - oracle_db).abs() < 1.0, "{got_db} vs {oracle_db}");
        let y = bandpass(&tone(2e3, fs, 400_000), &cfg, fs).unwrap();
        assert!(20.0 * steady_peak(&y).log10() <= -55.0);
    }

    #[test]
    fn dc_is_removed() {
        let fs = 1e6;
        let y = bandpass(&vec![1.0; 100_000], &BandpassConfig::new(2e4, 2e5), fs).unwrap();
        assert!(y[99_999].abs() < 1e-6);
    }

    #[test]
    fn rejects_bad_corners() {
        assert!(Bandpass::new(BandpassConfig::new(2e5, 2e4), 1e6).is_err());
        assert!(Bandpass::new(BandpassConfig::new(0.0, 2e4), 1e6).is_err());
        assert!(matches!(
            Bandpass::new(BandpassConfig::new(2e4, 6e5), 1e6),
            Err(Error::Sampling(_))
        ));
    }

    #[test]
    fn statistical_bandwidth_of_wide_band() {
        let fs = 1e6;
        let bp = Bandpass::new(BandpassConfig::new(2e4, 2e5), fs).unwrap();
        let b_n = bp.noise_bandwidth();
        let b_s = bp.statistical_bandwidth();
        assert!(b_s < b_n * 1.5 && b_s > 0.5 * b_n, "{b_s} {b_n}");
        assert!(b_n > 1.4e5 && b_n < 2.3e5, "{b_n}");
    }

    #[test]
    fn ideal_mode_keeps_in_band_and_kills_out_of_band() {
        let fs = 1e5;
        let n = 10_000;
        let cfg = BandpassConfig::new(1e3, 1e4);
        let inb = tone(5e3, fs, n);
        let outb: Vec<f64> = tone(200.0, fs, n);
        let mix: Vec<f64> = inb.iter().zip(&outb).map(|(a, b)| a + b).collect();
        let y = bandpass_ideal(&mix, &cfg, fs).unwrap();
        for (a, b) in y.iter().zip(&inb) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
