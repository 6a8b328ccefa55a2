//! Ensemble measurement of lock stability.
//!
//! Three residual-phase estimates are produced per seed:
//!
//! * `true_rms`: RMS of the simulated phase about the lock point. Only a
//!   simulation can see this.
//! * `inloop_rms`: in-loop error RMS divided by the measured error slope,
//!   which is what an experimenter reads off the error point.
//! * `noise_on_noise`: `sqrt(ΔE / |½E''|)`, where `ΔE` is the spread of the
//!   envelope mean over short windows and `½E''` the curvature of that mean
//!   at the lock point. This is the phase excursion whose second-order
//!   change of the detected noise power equals the noise on the noise
//!   power, and it is the quantity the fourth-root stability formulas
//!   describe.

use rayon::prelude::*;

use super::closed_loop::{lock_phase, lock_settings, run_closed_loop_with, LockReport, LoopOptions};
use super::servo::ServoConfig;
use super::sweep::{half_curvature_from_slope, measure_slope, SweepOptions};
use crate::analytic::LockPoint;
use crate::dsp::DspChainConfig;
use crate::error::{Error, Result};
use crate::timeseries::SynthesisConfig;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityOptions {
    /// Loop unity-gain frequency (Hz) the servo is tuned for.
    pub ugf: f64,
    /// Closed-loop run length per seed (s), including `settle`.
    pub duration: f64,
    pub settle: f64,
    /// Averaging time per slope point (s), settling excluded.
    pub slope_duration: f64,
    pub slope_delta: f64,
    pub nn_periods: usize,
    pub servo_limit: f64,
    /// Window-mean deviation (rad) beyond which a seed counts as having
    /// lost lock.
    pub threshold: f64,
}

impl StabilityOptions {
    pub fn new(ugf: f64, duration: f64, settle: f64) -> Self {
        Self {
            ugf,
            duration,
            settle,
            slope_duration: 2.0,
            slope_delta: 0.25,
            nn_periods: 2,
            servo_limit: 20.0,
            threshold: 0.3,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(x: &[f64]) -> Self {
        let n = x.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                n,
            };
        }
        let mean = x.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            (x.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, std, n }
    }

    /// Standard error of the mean.
    pub fn sem(&self) -> f64 {
        self.std / (self.n as f64).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SeedStability {
    pub seed: u64,
    pub report: LockReport,
    pub noise_on_noise: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilityEstimate {
    pub target: LockPoint,
    pub slope: f64,
    pub half_curvature: f64,
    pub servo: ServoConfig,
    pub excluded: usize,
    pub true_rms: Stat,
    pub inloop_rms: Stat,
    pub noise_on_noise: Stat,
    pub per_seed: Vec<SeedStability>,
}

/// Locks `n_seeds` independent runs (seeds `synth.seed + i`) to `target`
/// and summarizes their residual phase.
///
/// The servo is tuned to `opts.ugf` against the error slope measured at the
/// lock point. Seeds that do not hold lock are counted in `excluded`.
pub fn measure_stability(
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    target: LockPoint,
    n_seeds: usize,
    opts: &StabilityOptions,
) -> Result<StabilityEstimate> {
    if n_seeds < 10 {
        return Err(Error::param("n_seeds", format!("need at least 10 seeds, got {n_seeds}")));
    }
    let phase = lock_phase(&synth.mode, target)?;
    let (sign, demod) = lock_settings(target);
    let mut cfg = *synth;
    cfg.modulation.theta0 = phase;
    cfg.modulation.demod_phase = demod;

    let slope = measure_slope(
        &cfg,
        chain,
        phase,
        opts.slope_delta,
        &SweepOptions::for_chain(chain, opts.slope_duration),
    )?;
    if !(slope > 0.0) {
        return Err(Error::Input(format!(
            "error slope at the {} point is {slope}; the lock-in reference is misaligned",
            target.name()
        )));
    }
    let servo = ServoConfig::tuned(opts.ugf, slope, sign, opts.servo_limit)?;
    let m = chain.modulation_response(cfg.modulation.freq, cfg.fs)?.norm();
    let half_curvature = half_curvature_from_slope(slope, &cfg.mode, cfg.modulation.depth, m);

    let loop_opts = LoopOptions {
        acquisition_threshold: opts.threshold,
        measure_from: opts.settle,
        slope: Some(slope),
        nn_periods: opts.nn_periods,
        ..LoopOptions::default()
    };
    let per_seed = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = cfg;
            c.seed = synth.seed.wrapping_add(i);
            let (_, report) = run_closed_loop_with(&c, chain, &servo, opts.duration, &loop_opts)?;
            let noise_on_noise = (report.noise_on_noise / half_curvature).sqrt();
            Ok(SeedStability {
                seed: c.seed,
                report,
                noise_on_noise,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let held: Vec<&SeedStability> = per_seed.iter().filter(|s| s.report.acquired).collect();
    let pick = |f: &dyn Fn(&SeedStability) -> f64| Stat::of(&held.iter().map(|s| f(s)).collect::<Vec<_>>());
    Ok(StabilityEstimate {
        target,
        slope,
        half_curvature,
        servo,
        excluded: per_seed.len() - held.len(),
        true_rms: pick(&|s| s.report.residual_rms_true),
        inloop_rms: pick(&|s| s.report.residual_rms_inloop.unwrap_or(f64::NAN)),
        noise_on_noise: pick(&|s| s.noise_on_noise),
        per_seed,
    })
}
