//! Open-loop error-signal measurements and the fits used to read them.

use rayon::prelude::*;

use crate::analytic::bessel_j0_j1;
use crate::dsp::{DspChainConfig, NlChain};
use crate::error::{Error, Result};
use crate::timeseries::{SourceMode, SynthesisConfig, Synthesizer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepOptions {
    /// Simulated time per point (s), including `settle`.
    pub duration: f64,
    /// Filter settling time discarded at the start of each point (s).
    pub settle: f64,
    /// Batches used for the standard error of the mean.
    pub batches: usize,
}

impl SweepOptions {
    /// Settling long enough for the band-pass, envelope and lock-in filters:
    /// ten lock-in time constants per pole plus a few band-pass periods.
    pub fn for_chain(chain: &DspChainConfig, duration: f64) -> Self {
        let tau = chain.lockin.lpf_time_constant * chain.lockin.lpf_slope.order() as f64;
        let settle = 10.0 * tau + 20.0 / chain.bandpass.f_low + 5.0 / chain.envelope.cutoff;
        Self {
            duration: duration + settle,
            settle,
            batches: 100,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub theta0: f64,
    /// Mean lock-in output over an integer number of dither periods.
    pub error_mean: f64,
    /// Standard error of `error_mean` from batch means of the raw
    /// demodulated product.
    pub error_stderr: f64,
    pub envelope_mean: f64,
}

/// Error signal at a fixed phase with the loop open.
///
/// The lock-in reference phase is the chain's `ref_phase` plus the
/// modulation's `demod_phase`, as in the closed loop.
pub fn error_point(synth: &SynthesisConfig, chain: &DspChainConfig, theta0: f64, opts: &SweepOptions) -> Result<CurvePoint> {
    let mut cfg = *synth;
    cfg.modulation.theta0 = theta0;
    cfg.duration = opts.duration;
    cfg.validate()?;
    cfg.check_band(chain.bandpass.f_high)?;
    let mut ch = *chain;
    ch.lockin.ref_phase += cfg.modulation.demod_phase;
    let fs = cfg.fs;
    let n = cfg.n_samples();
    let k0 = (opts.settle * fs).round() as usize;
    let per_period = fs / cfg.modulation.freq;
    let periods = ((n.saturating_sub(k0)) as f64 / per_period).floor();
    let m = (periods * per_period).round() as usize;
    if periods < 1.0 || m < opts.batches.max(2) {
        return Err(Error::param("sweep duration", "too short to average a whole dither period after settling"));
    }
    let mut syn = Synthesizer::new(&cfg)?;
    let mut nl = NlChain::new(&ch, fs)?;
    let w = 2.0 * std::f64::consts::PI * ch.lockin.ref_freq / fs;
    let mut env = Vec::with_capacity(m);
    let mut err_sum = 0.0;
    for k in 0..k0 + m {
        let s = syn.step(0.0);
        let c = nl.step(s.photocurrent);
        if k >= k0 {
            env.push(c.envelope);
            err_sum += c.error;
        }
    }
    let env_mean = env.iter().sum::<f64>() / m as f64;
    let batches = opts.batches.max(2);
    let blen = m / batches;
    let mut bmeans = Vec::with_capacity(batches);
    for b in 0..batches {
        let mut acc = 0.0;
        for j in b * blen..(b + 1) * blen {
            let k = (k0 + j) as f64;
            acc += 2.0 * (env[j] - env_mean) * libm::sin(w * k + ch.lockin.ref_phase);
        }
        bmeans.push(acc / blen as f64);
    }
    let bm = bmeans.iter().sum::<f64>() / batches as f64;
    let bvar = bmeans.iter().map(|x| (x - bm) * (x - bm)).sum::<f64>() / (batches - 1) as f64;
    Ok(CurvePoint {
        theta0,
        error_mean: err_sum / m as f64,
        error_stderr: (bvar / batches as f64).sqrt(),
        envelope_mean: env_mean,
    })
}

/// Error signal over a phase grid; point `i` uses seed `seed + i`, and the
/// points run in parallel.
pub fn error_curve(
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    grid: &[f64],
    opts: &SweepOptions,
) -> Result<Vec<CurvePoint>> {
    grid.par_iter()
        .enumerate()
        .map(|(i, &theta)| {
            let mut cfg = *synth;
            cfg.seed = synth.seed.wrapping_add(i as u64);
            error_point(&cfg, chain, theta, opts)
        })
        .collect()
}

/// Error-signal slope at `center` from two open-loop points at
/// `center ± delta` that share a seed, so the common noise cancels.
///
/// The finite difference is corrected for the known sinusoidal shape:
/// `sin 2θ` for homodyne, `cos θ` for coherent fringes.
pub fn measure_slope(
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    center: f64,
    delta: f64,
    opts: &SweepOptions,
) -> Result<f64> {
    if !(delta > 0.0 && delta < 0.5) {
        return Err(Error::param("delta", format!("{delta} rad must lie in (0, 0.5)")));
    }
    let pts = [center + delta, center - delta]
        .par_iter()
        .map(|&t| error_point(synth, chain, t, opts))
        .collect::<Result<Vec<_>>>()?;
    let (hi, lo) = (pts[0], pts[1]);
    let k = harmonic_of(&synth.mode);
    let shape = (k * delta).sin() / (k * delta);
    Ok((hi.error_mean - lo.error_mean) / (2.0 * delta * shape))
}

/// Harmonic of θ in the error signal: 2 for homodyne, 1 for fringes.
pub fn harmonic_of(mode: &SourceMode) -> f64 {
    match mode {
        SourceMode::HomodyneSqueezed(_) => 2.0,
        SourceMode::Coherent { .. } => 1.0,
    }
}

/// Converts an error slope at a lock point into the half-curvature of the
/// envelope mean there, `|½ E''|`.
///
/// For a sinusoidal envelope curve the lock-in reads the first dither
/// harmonic: `ε = |M| · b · 2J₁(kθ₁) · (d/dθ of the unit shape)`, where
/// `|M|` is the chain's modulation transfer at the dither frequency.
pub fn half_curvature_from_slope(slope: f64, mode: &SourceMode, depth: f64, modulation_gain: f64) -> f64 {
    let k = harmonic_of(mode);
    let (_, j1) = bessel_j0_j1(k * depth);
    // Homodyne: E = a − b cos 2θ, slope = 4 b J₁(2θ₁)|M|, ½E'' = 2b.
    // Fringe:   E = a + b sin θ,  slope = 2 b J₁(θ₁)|M|,  ½E'' = b/2.
    let b = slope.abs() / (2.0 * k * j1 * modulation_gain);
    b * k * k / 2.0
}

/// Least-squares fit `y ≈ a sin kθ + b cos kθ + c`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarmonicFit {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub k: f64,
    pub residual_rms: f64,
}

impl HarmonicFit {
    pub fn fit(theta: &[f64], y: &[f64], k: f64) -> Result<Self> {
        if theta.len() != y.len() || theta.len() < 4 {
            return Err(Error::Input("harmonic fit needs at least four matched points".into()));
        }
        let rows: Vec<[f64; 3]> = theta.iter().map(|&t| [(k * t).sin(), (k * t).cos(), 1.0]).collect();
        let mut ata = [[0.0; 3]; 3];
        let mut aty = [0.0; 3];
        for (r, &yi) in rows.iter().zip(y) {
            for i in 0..3 {
                aty[i] += r[i] * yi;
                for j in 0..3 {
                    ata[i][j] += r[i] * r[j];
                }
            }
        }
        let p = solve3(ata, aty).ok_or_else(|| Error::Input("degenerate phase grid for harmonic fit".into()))?;
        let res = rows
            .iter()
            .zip(y)
            .map(|(r, yi)| {
                let e = yi - (p[0] * r[0] + p[1] * r[1] + p[2]);
                e * e
            })
            .sum::<f64>();
        Ok(Self {
            a: p[0],
            b: p[1],
            c: p[2],
            k,
            residual_rms: (res / y.len() as f64).sqrt(),
        })
    }

    pub fn amplitude(&self) -> f64 {
        self.a.hypot(self.b)
    }

    pub fn eval(&self, t: f64) -> f64 {
        self.a * (self.k * t).sin() + self.b * (self.k * t).cos() + self.c
    }

    pub fn slope(&self, t: f64) -> f64 {
        self.k * (self.a * (self.k * t).cos() - self.b * (self.k * t).sin())
    }

    /// Zero crossings in `[0, 2π)`, each with the sign of the slope there.
    pub fn zero_crossings(&self) -> Vec<(f64, f64)> {
        // a sin kθ + b cos kθ = R sin(kθ + φ) = −c.
        let r = self.amplitude();
        if r == 0.0 || self.c.abs() > r {
            return Vec::new();
        }
        let phi = self.b.atan2(self.a);
        let base = (-self.c / r).asin();
        let two_pi = 2.0 * std::f64::consts::PI;
        let mut out = Vec::new();
        let turns = self.k.round() as i64;
        for s in [base, std::f64::consts::PI - base] {
            for m in -1..=turns + 1 {
                let t = ((s - phi) + two_pi * m as f64) / self.k;
                if (0.0..two_pi).contains(&t) && !out.iter().any(|(x, _): &(f64, f64)| (x - t).abs() < 1e-9) {
                    out.push((t, self.slope(t)));
                }
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0));
        out
    }
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let piv = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..3 {
            let f = a[row][col] / a[col][col];
            for j in col..3 {
                a[row][j] -= f * a[col][j];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 3];
    for i in (0..3).rev() {
        let s: f64 = (i + 1..3).map(|j| a[i][j] * x[j]).sum();
        x[i] = (b[i] - s) / a[i][i];
    }
    Some(x)
}

/// One-parameter fit `y ≈ A · shape(θ)`; returns `(A, residual_rms)`.
pub fn fit_single_gain(theta: &[f64], y: &[f64], shape: impl Fn(f64) -> f64) -> (f64, f64) {
    let s: Vec<f64> = theta.iter().map(|&t| shape(t)).collect();
    let num: f64 = s.iter().zip(y).map(|(a, b)| a * b).sum();
    let den: f64 = s.iter().map(|a| a * a).sum();
    let a = if den > 0.0 { num / den } else { 0.0 };
    let res = s.iter().zip(y).map(|(si, yi)| (yi - a * si).powi(2)).sum::<f64>();
    (a, (res / y.len().max(1) as f64).sqrt())
}
