use std::f64::consts::PI;

use super::filters::{Biquad, Filter};
use crate::error::{Error, Result};

/// What the detector squares off before smoothing.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DetectorLaw {
    /// Full-wave rectifier `|x|`, like a diode stage. Output tracks the
    /// amplitude envelope.
    Amplitude,
    /// Square-law `x²`. Output tracks the in-band noise power, so a
    /// dithered quadrature variance maps linearly onto the output.
    Power,
}

impl DetectorLaw {
    pub fn name(self) -> &'static str {
        match self {
            DetectorLaw::Amplitude => "amplitude",
            DetectorLaw::Power => "power",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "amplitude" => Some(DetectorLaw::Amplitude),
            "power" => Some(DetectorLaw::Power),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopeConfig {
    pub cutoff: f64,
    pub gain_calibration: f64,
    pub law: DetectorLaw,
}

impl EnvelopeConfig {
    /// Rectifier with gain `π/2`, so a steady sine of amplitude `A` reads `A`.
    pub fn amplitude(cutoff: f64) -> Self {
        Self {
            cutoff,
            gain_calibration: PI / 2.0,
            law: DetectorLaw::Amplitude,
        }
    }

    /// Square-law detector with unit gain: white noise of variance `σ²`
    /// reads `σ²`.
    pub fn power(cutoff: f64) -> Self {
        Self {
            cutoff,
            gain_calibration: 1.0,
            law: DetectorLaw::Power,
        }
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.cutoff > 0.0 && self.cutoff < fs / 2.0) {
            return Err(Error::param(
                "envelope.cutoff",
                format!("{} Hz must lie in (0, fs/2)", self.cutoff),
            ));
        }
        if !(self.gain_calibration.is_finite() && self.gain_calibration > 0.0) {
            return Err(Error::param("envelope.gain_calibration", "must be positive"));
        }
        Ok(())
    }
}

/// Detector nonlinearity followed by a first-order low-pass at `cutoff`.
#[derive(Clone, Debug)]
pub struct EnvelopeDetector {
    cfg: EnvelopeConfig,
    lpf: Biquad,
}

impl EnvelopeDetector {
    pub fn new(cfg: EnvelopeConfig, fs: f64) -> Result<Self> {
        cfg.validate(fs)?;
        Ok(Self {
            cfg,
            lpf: Biquad::lowpass1(cfg.cutoff, fs),
        })
    }

    pub fn config(&self) -> &EnvelopeConfig {
        &self.cfg
    }

    /// Phase of the smoothing filter at `freq` (radians, negative = lag).
    pub fn phase_at(&self, freq: f64, fs: f64) -> f64 {
        self.lpf.response(freq, fs).arg()
    }

    pub fn magnitude_at(&self, freq: f64, fs: f64) -> f64 {
        self.lpf.response(freq, fs).norm()
    }
}

impl Filter for EnvelopeDetector {
    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let d = match self.cfg.law {
            DetectorLaw::Amplitude => x.abs(),
            DetectorLaw::Power => x * x,
        };
        self.cfg.gain_calibration * self.lpf.process(d)
    }

    fn reset(&mut self) {
        self.lpf.reset();
    }
}

pub fn envelope_detect(input: &[f64], cfg: &EnvelopeConfig, fs: f64) -> Result<Vec<f64>> {
    Ok(EnvelopeDetector::new(*cfg, fs)?.process_block(input))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::NoiseStream;

    fn tail_mean(y: &[f64]) -> f64 {
        let t = &y[y.len() / 2..];
        t.iter().sum::<f64>() / t.len() as f64
    }

    #[test]
    fn sine_reads_its_amplitude() {
        let fs = 1e6;
        let a = 0.7;
        let x: Vec<f64> = (0..200_000)
            .map(|k| a * (2.0 * PI * 63_245.0 * k as f64 / fs).sin())
            .collect();
        let y = envelope_detect(&x, &EnvelopeConfig::amplitude(2e3), fs).unwrap();
        assert!((tail_mean(&y) / a - 1.0).abs() < 0.02);
        let p = envelope_detect(&x, &EnvelopeConfig::power(2e3), fs).unwrap();
        assert!((tail_mean(&p) / (a * a / 2.0) - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_in_zero_out() {
        let y = envelope_detect(&[0.0; 1000], &EnvelopeConfig::amplitude(2e3), 1e6).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gaussian_noise_reads_sqrt_pi_over_two_sigma() {
        let fs = 1e6;
        let sigma = 2.0;
        let mut g = NoiseStream::new(5, 0);
        let x: Vec<f64> = (0..1_000_000).map(|_| sigma * g.gaussian()).collect();
        let y = envelope_detect(&x, &EnvelopeConfig::amplitude(2e3), fs).unwrap();
        let expect = sigma * (PI / 2.0).sqrt();
        assert!((tail_mean(&y) / expect - 1.0).abs() < 0.01);
        let p = envelope_detect(&x, &EnvelopeConfig::power(2e3), fs).unwrap();
        assert!((tail_mean(&p) / (sigma * sigma) - 1.0).abs() < 0.01);
    }
}
