use std::f64::consts::PI;

use super::filters::{Cascade, Filter};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LpfSlope {
    /// One RC stage, 6 dB/octave.
    Db6,
    /// Two RC stages, 12 dB/octave.
    Db12,
}

impl LpfSlope {
    pub fn order(self) -> usize {
        match self {
            LpfSlope::Db6 => 1,
            LpfSlope::Db12 => 2,
        }
    }

    pub fn db_per_octave(self) -> u32 {
        6 * self.order() as u32
    }

    pub fn from_db_per_octave(db: u32) -> Option<Self> {
        match db {
            6 => Some(LpfSlope::Db6),
            12 => Some(LpfSlope::Db12),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LockInConfig {
    pub ref_freq: f64,
    pub ref_phase: f64,
    pub lpf_time_constant: f64,
    pub lpf_slope: LpfSlope,
}

impl LockInConfig {
    pub fn new(ref_freq: f64, lpf_time_constant: f64, lpf_slope: LpfSlope) -> Self {
        Self {
            ref_freq,
            ref_phase: 0.0,
            lpf_time_constant,
            lpf_slope,
        }
    }

    /// Corner of each RC stage, `1 / (2π τ)`.
    pub fn lpf_corner(&self) -> f64 {
        1.0 / (2.0 * PI * self.lpf_time_constant)
    }

    pub fn validate(&self, fs: f64) -> Result<()> {
        if !(self.ref_freq > 0.0 && self.ref_freq < fs / 2.0) {
            return Err(Error::Sampling(format!(
                "lock-in reference {} Hz must lie in (0, fs/2)",
                self.ref_freq
            )));
        }
        if !(self.lpf_time_constant.is_finite() && self.lpf_time_constant > 0.0) {
            return Err(Error::param("lockin.time_constant", "must be positive"));
        }
        if self.lpf_corner() >= self.ref_freq / 2.0 {
            return Err(Error::param(
                "lockin.time_constant",
                format!(
                    "LPF corner {:.4} Hz is not well below the reference {} Hz",
                    self.lpf_corner(),
                    self.ref_freq
                ),
            ));
        }
        if !self.ref_phase.is_finite() {
            return Err(Error::param("lockin.ref_phase", "must be finite"));
        }
        Ok(())
    }
}

/// `out[k] = LPF(2 · in[k] · sin(2π f_ref k / fs + φ_ref))`.
#[derive(Clone, Debug)]
pub struct LockIn {
    cfg: LockInConfig,
    w: f64,
    k: u64,
    lpf: Cascade,
}

impl LockIn {
    pub fn new(cfg: LockInConfig, fs: f64) -> Result<Self> {
        cfg.validate(fs)?;
        Ok(Self {
            cfg,
            w: 2.0 * PI * cfg.ref_freq / fs,
            k: 0,
            lpf: Cascade::rc_lowpass(cfg.lpf_slope.order(), cfg.lpf_corner(), fs),
        })
    }

    pub fn config(&self) -> &LockInConfig {
        &self.cfg
    }

    /// Response of the output low-pass at baseband frequency `freq`.
    pub fn lpf_response(&self, freq: f64, fs: f64) -> num_complex::Complex64 {
        self.lpf.response(freq, fs)
    }
}

impl Filter for LockIn {
    #[inline]
    fn process(&mut self, x: f64) -> f64 {
        let r = libm::sin(self.w * self.k as f64 + self.cfg.ref_phase);
        self.k += 1;
        self.lpf.process(2.0 * x * r)
    }

    fn reset(&mut self) {
        self.k = 0;
        self.lpf.reset();
    }
}

pub fn lock_in(input: &[f64], cfg: &LockInConfig, fs: f64) -> Result<Vec<f64>> {
    Ok(LockIn::new(*cfg, fs)?.process_block(input))
}
