use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Proportional-integral servo driving the phase actuator.
///
/// With `e` the error sample, the discrete law is
///
/// ```text
/// s = sign · e
/// I ← clamp(I + ki · s / fs, ±limit)
/// u = clamp(−(kp · s + I), ±limit)
/// ```
///
/// so a positive error pushes the phase down when `sign = +1`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ServoConfig {
    pub kp: f64,
    /// Integrator gain in 1/s.
    pub ki: f64,
    pub sign: f64,
    /// Actuator range in radians (symmetric).
    pub limit: f64,
    /// Unity-gain frequency the gains were designed for, in Hz. Advisory.
    pub target_ugf: f64,
}

impl ServoConfig {
    /// Integrator-dominant design for an error slope `slope` (error units
    /// per radian): `ki = 2π f_u / |slope|`, with the proportional zero a
    /// factor of four above `f_u` to add phase margin.
    pub fn tuned(target_ugf: f64, slope: f64, sign: f64, limit: f64) -> Result<Self> {
        if !(slope.is_finite() && slope != 0.0) {
            return Err(Error::param("slope", format!("need a finite nonzero slope, got {slope}")));
        }
        let ki = 2.0 * PI * target_ugf / slope.abs();
        let cfg = Self {
            kp: ki / (2.0 * PI * 4.0 * target_ugf),
            ki,
            sign,
            limit,
            target_ugf,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// A servo that never acts.
    pub fn open(limit: f64) -> Self {
        Self {
            kp: 0.0,
            ki: 0.0,
            sign: 1.0,
            limit,
            target_ugf: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.kp.is_finite() && self.ki.is_finite()) {
            return Err(Error::param("servo gains", "must be finite"));
        }
        if self.sign != 1.0 && self.sign != -1.0 {
            return Err(Error::param("servo.sign", format!("must be +1 or -1, got {}", self.sign)));
        }
        if !(self.limit.is_finite() && self.limit > 0.0) {
            return Err(Error::param("servo.limit", format!("must be positive, got {}", self.limit)));
        }
        if !(self.target_ugf.is_finite() && self.target_ugf >= 0.0) {
            return Err(Error::param("servo.target_ugf", "must be finite and >= 0"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct Servo {
    cfg: ServoConfig,
    dt: f64,
    integ: f64,
    out: f64,
}

impl Servo {
    pub fn new(cfg: ServoConfig, fs: f64) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            cfg,
            dt: 1.0 / fs,
            integ: 0.0,
            out: 0.0,
        })
    }

    /// Output to apply at the next sample.
    #[inline]
    pub fn output(&self) -> f64 {
        self.out
    }

    /// Loads the integrator so the output continues from `u` without a step.
    pub fn preset_output(&mut self, u: f64) {
        let lim = self.cfg.limit;
        self.integ = (-u).clamp(-lim, lim);
        self.out = u.clamp(-lim, lim);
    }

    #[inline]
    pub fn update(&mut self, error: f64) -> f64 {
        let s = self.cfg.sign * error;
        let lim = self.cfg.limit;
        self.integ = (self.integ + self.cfg.ki * s * self.dt).clamp(-lim, lim);
        self.out = (-(self.cfg.kp * s + self.integ)).clamp(-lim, lim);
        self.out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tuned_gains() {
        let s = ServoConfig::tuned(4.0, 2.0, 1.0, 10.0).unwrap();
        assert!((s.ki - 2.0 * PI * 2.0).abs() < 1e-12);
        assert!((s.ki / s.kp - 2.0 * PI * 16.0).abs() < 1e-9);
        assert!(ServoConfig::tuned(4.0, 0.0, 1.0, 10.0).is_err());
        assert!(ServoConfig::tuned(4.0, 1.0, 0.5, 10.0).is_err());
    }

    #[test]
    fn integrator_saturates() {
        let cfg = ServoConfig {
            kp: 0.0,
            ki: 1000.0,
            sign: 1.0,
            limit: 0.5,
            target_ugf: 1.0,
        };
        let mut s = Servo::new(cfg, 1000.0).unwrap();
        for _ in 0..10_000 {
            s.update(1.0);
        }
        assert_eq!(s.output(), -0.5);
        // Anti-windup: recovery starts as soon as the error reverses.
        s.update(-1.0);
        assert!(s.output() > -0.5);
    }

    #[test]
    fn first_order_loop_settles() {
        // Plant: e = slope · (θ_d + u). Integrator-only loop converges.
        let fs = 1e4;
        let slope = 3.0;
        let cfg = ServoConfig::tuned(10.0, slope, 1.0, 10.0).unwrap();
        let mut s = Servo::new(cfg, fs).unwrap();
        let mut u = 0.0;
        for _ in 0..10_000 {
            let e = slope * (0.7 + u);
            u = s.update(e);
        }
        assert!((u + 0.7).abs() < 1e-6);
    }
}
