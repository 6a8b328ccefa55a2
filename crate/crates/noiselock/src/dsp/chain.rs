//! The noise-locking readout: band-pass → envelope → lock-in.

use num_complex::Complex64;

use super::bandpass::{Bandpass, BandpassConfig};
use super::envelope::{DetectorLaw, EnvelopeConfig, EnvelopeDetector};
use super::filters::Filter;
use super::lockin::{LockIn, LockInConfig};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DspChainConfig {
    pub bandpass: BandpassConfig,
    pub envelope: EnvelopeConfig,
    pub lockin: LockInConfig,
}

impl DspChainConfig {
    pub fn validate(&self, fs: f64) -> Result<()> {
        self.bandpass.validate(fs)?;
        self.envelope.validate(fs)?;
        self.lockin.validate(fs)?;
        if self.envelope.cutoff >= self.bandpass.f_low {
            return Err(Error::param(
                "envelope.cutoff",
                format!(
                    "{} Hz must lie below the band-pass low corner {} Hz",
                    self.envelope.cutoff, self.bandpass.f_low
                ),
            ));
        }
        if self.lockin.ref_freq >= self.envelope.cutoff {
            return Err(Error::param(
                "lockin.ref_freq",
                format!(
                    "dither {} Hz must pass the envelope filter (cutoff {} Hz)",
                    self.lockin.ref_freq, self.envelope.cutoff
                ),
            ));
        }
        Ok(())
    }

    /// Small-signal transfer from a variance modulation at `freq` on the
    /// detector input to the envelope output.
    ///
    /// A band-limited noise of slowly varying PSD `V(t)` leaves the band-pass
    /// with power `Σ h[n]² V(t − n)`, so the modulation sees the kernel
    /// `h²` (normalized here) followed by the envelope low-pass.
    pub fn modulation_response(&self, freq: f64, fs: f64) -> Result<Complex64> {
        let bp = Bandpass::new(self.bandpass, fs)?;
        let env = EnvelopeDetector::new(self.envelope, fs)?;
        let m = squared_kernel_response(&bp, freq, fs);
        let e = Complex64::from_polar(env.magnitude_at(freq, fs), env.phase_at(freq, fs));
        Ok(m * e)
    }

    /// Lock-in reference phase that demodulates exactly in phase with the
    /// detected dither, so `ε ∝ +dV/dθ`.
    pub fn aligned_ref_phase(&self, fs: f64) -> Result<f64> {
        Ok(self.modulation_response(self.lockin.ref_freq, fs)?.arg())
    }

    /// Small-signal gain from `dV/dθ` (in PSD units) to the lock-in output
    /// for a power-law detector, a dither of depth `depth`, and an aligned
    /// reference: `K = gain · B_n · depth · |M(Ω)|`.
    pub fn power_law_gain(&self, depth: f64, fs: f64) -> Result<f64> {
        let bp = Bandpass::new(self.bandpass, fs)?;
        let m = self.modulation_response(self.lockin.ref_freq, fs)?.norm();
        Ok(self.envelope.gain_calibration * bp.noise_bandwidth() * depth * m)
    }
}

fn squared_kernel_response(bp: &Bandpass, freq: f64, fs: f64) -> Complex64 {
    let mut f = bp.clone();
    f.reset();
    let w = 2.0 * std::f64::consts::PI * freq / fs;
    let (mut num, mut den) = (Complex64::new(0.0, 0.0), 0.0);
    let mut quiet = 0;
    for n in 0..(1usize << 22) {
        let h = f.process(if n == 0 { 1.0 } else { 0.0 });
        let h2 = h * h;
        num += Complex64::from_polar(h2, -w * n as f64);
        den += h2;
        quiet = if h2 < 1e-18 * den { quiet + 1 } else { 0 };
        if quiet > 4096 {
            break;
        }
    }
    num / den
}

/// Per-sample outputs of every stage.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct ChainSample {
    pub bpf: f64,
    pub envelope: f64,
    pub error: f64,
}

#[derive(Clone, Debug)]
pub struct NlChain {
    bandpass: Bandpass,
    envelope: EnvelopeDetector,
    lockin: LockIn,
}

impl NlChain {
    pub fn new(cfg: &DspChainConfig, fs: f64) -> Result<Self> {
        cfg.validate(fs)?;
        Ok(Self {
            bandpass: Bandpass::new(cfg.bandpass, fs)?,
            envelope: EnvelopeDetector::new(cfg.envelope, fs)?,
            lockin: LockIn::new(cfg.lockin, fs)?,
        })
    }

    pub fn law(&self) -> DetectorLaw {
        self.envelope.config().law
    }

    #[inline]
    pub fn step(&mut self, x: f64) -> ChainSample {
        let bpf = self.bandpass.process(x);
        let envelope = self.envelope.process(bpf);
        let error = self.lockin.process(envelope);
        ChainSample { bpf, envelope, error }
    }

    pub fn reset(&mut self) {
        self.bandpass.reset();
        self.envelope.reset();
        self.lockin.reset();
    }
}
