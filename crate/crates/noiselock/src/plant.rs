//! Gaussian statistical model of the optical system.
//!
//! All variances are dimensionless ratios to the shot-noise limit (SNL): a
//! vacuum or coherent state has variance 1 per unit detection bandwidth.
//! Phases are in radians.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::rng::{streams, NoiseStream};

/// Dither depths above this are outside the small-depth Bessel expansion.
pub const SMALL_DEPTH_LIMIT: f64 = 0.2;

/// Which quadrature of the signal field carries the squeezing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Quadrature {
    Amplitude,
    Phase,
}

impl Quadrature {
    pub fn other(self) -> Self {
        match self {
            Quadrature::Amplitude => Quadrature::Phase,
            Quadrature::Phase => Quadrature::Amplitude,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SqueezedStateSpec {
    squeeze_factor: f64,
    squeezed_quadrature: Quadrature,
    loss: f64,
}

impl SqueezedStateSpec {
    /// `loss` is the lumped source-plus-detection loss λ in [0, 1).
    pub fn new(squeeze_factor: f64, squeezed_quadrature: Quadrature, loss: f64) -> Result<Self> {
        if !(squeeze_factor.is_finite() && squeeze_factor >= 0.0) {
            return Err(Error::param("squeeze_factor", format!("must be finite and >= 0, got {squeeze_factor}")));
        }
        if !(0.0..1.0).contains(&loss) {
            return Err(Error::param("loss_lambda", format!("must lie in [0, 1), got {loss}")));
        }
        Ok(Self {
            squeeze_factor,
            squeezed_quadrature,
            loss,
        })
    }

    /// Squeeze factor giving `db` of squeezing before loss
    /// (`10 log10 e^{2R} = db`).
    pub fn squeeze_factor_for_db(db: f64) -> f64 {
        db * std::f64::consts::LN_10 / 20.0
    }

    pub fn squeeze_factor(&self) -> f64 {
        self.squeeze_factor
    }

    pub fn squeezed_quadrature(&self) -> Quadrature {
        self.squeezed_quadrature
    }

    pub fn loss(&self) -> f64 {
        self.loss
    }
}

/// Amplitude (`v1`) and phase (`v2`) quadrature variances of the signal field.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureVariances {
    pub v1: f64,
    pub v2: f64,
}

impl QuadratureVariances {
    pub fn new(v1: f64, v2: f64) -> Result<Self> {
        if !(v1.is_finite() && v1 > 0.0) {
            return Err(Error::param("v1", format!("variance must be finite and > 0, got {v1}")));
        }
        if !(v2.is_finite() && v2 > 0.0) {
            return Err(Error::param("v2", format!("variance must be finite and > 0, got {v2}")));
        }
        Ok(Self { v1, v2 })
    }

    pub fn shot_noise() -> Self {
        Self { v1: 1.0, v2: 1.0 }
    }

    pub fn min(&self) -> f64 {
        self.v1.min(self.v2)
    }

    pub fn max(&self) -> f64 {
        self.v1.max(self.v2)
    }

    pub fn swapped(&self) -> Self {
        Self {
            v1: self.v2,
            v2: self.v1,
        }
    }

    /// Homodyne angle at which the detected variance is minimal (mod π).
    pub fn squeezed_angle(&self) -> f64 {
        if self.v1 <= self.v2 {
            PI / 2.0
        } else {
            0.0
        }
    }

    /// Homodyne angle at which the detected variance is maximal (mod π).
    pub fn anti_squeezed_angle(&self) -> f64 {
        if self.v1 <= self.v2 {
            0.0
        } else {
            PI / 2.0
        }
    }

    pub fn in_db(&self) -> (f64, f64) {
        (10.0 * self.v1.log10(), 10.0 * self.v2.log10())
    }
}

/// Mixes a fraction `loss` of vacuum into a variance.
#[inline]
pub fn apply_loss(variance: f64, loss: f64) -> f64 {
    (1.0 - loss) * variance + loss
}

/// Quadrature variances of a squeezed vacuum after lumped loss.
///
/// The squeezed quadrature gets `(1-λ)e^{-2R} + λ`, the other `(1-λ)e^{2R} + λ`.
pub fn quadrature_variances(spec: &SqueezedStateSpec) -> QuadratureVariances {
    let r = spec.squeeze_factor;
    let squeezed = apply_loss((-2.0 * r).exp(), spec.loss);
    let anti = apply_loss((2.0 * r).exp(), spec.loss);
    match spec.squeezed_quadrature {
        Quadrature::Amplitude => QuadratureVariances { v1: squeezed, v2: anti },
        Quadrature::Phase => QuadratureVariances { v1: anti, v2: squeezed },
    }
}

/// Variance seen by a homodyne detector with a strong local oscillator at
/// relative phase `theta`: `v1 sin²θ + v2 cos²θ`.
#[inline]
pub fn homodyne_variance(vars: &QuadratureVariances, theta: f64) -> f64 {
    // Written via cos 2θ so the hot loop needs a single trig call.
    let c = libm::cos(2.0 * theta);
    0.5 * (vars.v1 + vars.v2) - 0.5 * (vars.v1 - vars.v2) * c
}

/// Full two-field difference-photocurrent variance per unit bandwidth, for
/// signal `a` and local oscillator `b` with mean amplitudes `amp_a`, `amp_b`.
///
/// Reduces to `amp_b² · homodyne_variance(a, θ)` when `amp_a ≪ amp_b`.
pub fn homodyne_variance_two_field(
    a: &QuadratureVariances,
    b: &QuadratureVariances,
    amp_a: f64,
    amp_b: f64,
    theta: f64,
) -> f64 {
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    let (s2, c2) = (s * s, c * c);
    amp_a * amp_a * (b.v1 * s2 + b.v2 * c2) + amp_b * amp_b * (a.v1 * s2 + a.v2 * c2)
}

/// Two coherent beams interfering on a balanced beamsplitter.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoherentPairSpec {
    amp_a: f64,
    amp_b: f64,
    photon_flux: f64,
}

impl CoherentPairSpec {
    /// Default photon flux per unit fringe power, in photons/s.
    pub const DEFAULT_PHOTON_FLUX: f64 = 1.0e9;

    pub fn new(amp_a: f64, amp_b: f64) -> Result<Self> {
        Self::with_photon_flux(amp_a, amp_b, Self::DEFAULT_PHOTON_FLUX)
    }

    /// `photon_flux` sets the mean photocurrent relative to its shot noise:
    /// in SNL units a port with fringe power `P` has mean `sqrt(flux)·P` and
    /// one-sided noise density `P`.
    pub fn with_photon_flux(amp_a: f64, amp_b: f64, photon_flux: f64) -> Result<Self> {
        if !(amp_a.is_finite() && amp_a >= 0.0) {
            return Err(Error::param("amp_a", format!("must be finite and >= 0, got {amp_a}")));
        }
        if !(amp_b.is_finite() && amp_b >= 0.0) {
            return Err(Error::param("amp_b", format!("must be finite and >= 0, got {amp_b}")));
        }
        if !(photon_flux.is_finite() && photon_flux > 0.0) {
            return Err(Error::param("photon_flux", format!("must be finite and > 0, got {photon_flux}")));
        }
        Ok(Self {
            amp_a,
            amp_b,
            photon_flux,
        })
    }

    /// Pair with fringe visibility `visibility` and total power `ā² + b̄² = total_power`.
    pub fn from_visibility(visibility: f64, total_power: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&visibility) {
            return Err(Error::param("visibility", format!("must lie in [0, 1], got {visibility}")));
        }
        if !(total_power.is_finite() && total_power > 0.0) {
            return Err(Error::param("total_power", format!("must be finite and > 0, got {total_power}")));
        }
        let sum = (total_power * (1.0 + visibility)).sqrt();
        let diff = (total_power * (1.0 - visibility)).sqrt();
        Self::new(0.5 * (sum + diff), 0.5 * (sum - diff))
    }

    pub fn amp_a(&self) -> f64 {
        self.amp_a
    }

    pub fn amp_b(&self) -> f64 {
        self.amp_b
    }

    pub fn photon_flux(&self) -> f64 {
        self.photon_flux
    }

    pub fn total_power(&self) -> f64 {
        self.amp_a * self.amp_a + self.amp_b * self.amp_b
    }

    pub fn visibility(&self) -> f64 {
        let total = self.total_power();
        if total == 0.0 {
            0.0
        } else {
            2.0 * self.amp_a * self.amp_b / total
        }
    }
}

/// Beamsplitter output port. `D` is bright at θ = π/2, `C` at θ = 3π/2.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Port {
    C,
    D,
}

impl Port {
    pub fn other(self) -> Self {
        match self {
            Port::C => Port::D,
            Port::D => Port::C,
        }
    }

    fn sign(self) -> f64 {
        match self {
            Port::D => 1.0,
            Port::C => -1.0,
        }
    }
}

/// Mean power at one port: `½(ā² + b̄² ± 2āb̄ sinθ)`, `+` for port D.
#[inline]
pub fn fringe_power(pair: &CoherentPairSpec, theta: f64, port: Port) -> f64 {
    let cross = 2.0 * pair.amp_a * pair.amp_b * libm::sin(theta);
    // Clamp rounding below zero at a perfect dark fringe.
    (0.5 * (pair.total_power() + port.sign() * cross)).max(0.0)
}

/// Phase dither `θ = θ₀ + θ₁ sin(2π f t)` and the lock-in reference phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModulationSpec {
    pub theta0: f64,
    pub depth: f64,
    /// Dither frequency in Hz.
    pub freq: f64,
    pub demod_phase: f64,
}

impl ModulationSpec {
    pub fn new(theta0: f64, depth: f64, freq: f64, demod_phase: f64) -> Result<Self> {
        let m = Self {
            theta0,
            depth,
            freq,
            demod_phase,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.theta0.is_finite() {
            return Err(Error::param("theta0", "must be finite"));
        }
        if !(self.depth.is_finite() && self.depth >= 0.0) {
            return Err(Error::param("mod_depth", format!("must be finite and >= 0, got {}", self.depth)));
        }
        if !(self.freq.is_finite() && self.freq > 0.0) {
            return Err(Error::param("mod_freq", format!("must be finite and > 0, got {}", self.freq)));
        }
        if !self.demod_phase.is_finite() {
            return Err(Error::param("demod_phase", "must be finite"));
        }
        Ok(())
    }

    /// Angular dither frequency Ω in rad/s.
    pub fn omega(&self) -> f64 {
        2.0 * PI * self.freq
    }

    pub fn small_depth_valid(&self) -> bool {
        self.depth <= SMALL_DEPTH_LIMIT
    }
}

/// Phase disturbances acting on the interferometer.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum DisturbanceSpec {
    #[default]
    None,
    Sinusoid {
        freq: f64,
        amplitude: f64,
    },
    /// Wiener process with `Var[φ(t)] = diffusion · t` (rad²/s).
    RandomWalk {
        diffusion: f64,
    },
    /// Linear phase ramp in rad/s.
    ConstantDrift {
        rate: f64,
    },
}

impl DisturbanceSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            DisturbanceSpec::None => Ok(()),
            DisturbanceSpec::Sinusoid { freq, amplitude } => {
                if !(freq.is_finite() && freq >= 0.0 && amplitude.is_finite()) {
                    return Err(Error::param("disturbance", "sinusoid needs finite freq >= 0 and amplitude"));
                }
                Ok(())
            }
            DisturbanceSpec::RandomWalk { diffusion } => {
                if !(diffusion.is_finite() && diffusion >= 0.0) {
                    return Err(Error::param("disturbance", format!("random walk diffusion must be >= 0, got {diffusion}")));
                }
                Ok(())
            }
            DisturbanceSpec::ConstantDrift { rate } => {
                if !rate.is_finite() {
                    return Err(Error::param("disturbance", "drift rate must be finite"));
                }
                Ok(())
            }
        }
    }
}

/// Streaming disturbance generator. Sample 0 is always zero.
#[derive(Clone, Debug)]
pub struct Disturbance {
    spec: DisturbanceSpec,
    fs: f64,
    k: u64,
    value: f64,
    step_std: f64,
    noise: NoiseStream,
}

impl Disturbance {
    pub fn new(spec: DisturbanceSpec, fs: f64, seed: u64) -> Self {
        let step_std = match spec {
            DisturbanceSpec::RandomWalk { diffusion } => (diffusion / fs).sqrt(),
            _ => 0.0,
        };
        Self {
            spec,
            fs,
            k: 0,
            value: 0.0,
            step_std,
            noise: NoiseStream::new(seed, streams::DISTURBANCE),
        }
    }

    #[inline]
    pub fn next_value(&mut self) -> f64 {
        let k = self.k;
        self.k += 1;
        match self.spec {
            DisturbanceSpec::None => 0.0,
            DisturbanceSpec::Sinusoid { freq, amplitude } => {
                amplitude * libm::sin(2.0 * PI * ((k as f64) * freq / self.fs).fract())
            }
            DisturbanceSpec::RandomWalk { .. } => {
                let out = self.value;
                self.value += self.step_std * self.noise.gaussian();
                out
            }
            DisturbanceSpec::ConstantDrift { rate } => rate * k as f64 / self.fs,
        }
    }
}

/// One sample of the relative phase.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseSample {
    /// Instantaneous phase including the dither.
    pub total: f64,
    /// θ₀ + disturbance + control: the phase the loop is trying to hold.
    pub slow: f64,
    /// sin(Ω t) at this sample, reused by callers that need the dither phase.
    pub dither: f64,
}

/// Streaming phase model: θ[k] = θ₀ + θ₁ sin(Ωk/fs) + disturbance[k] + control[k].
#[derive(Clone, Debug)]
pub struct PhaseModel {
    modulation: ModulationSpec,
    disturbance: Disturbance,
    fs: f64,
    k: u64,
}

impl PhaseModel {
    pub fn new(modulation: ModulationSpec, disturbance: DisturbanceSpec, fs: f64, seed: u64) -> Result<Self> {
        modulation.validate()?;
        disturbance.validate()?;
        if !(fs.is_finite() && fs > 0.0) {
            return Err(Error::Sampling(format!("sample rate must be > 0, got {fs}")));
        }
        if fs <= 2.0 * modulation.freq {
            return Err(Error::Sampling(format!(
                "fs = {fs} Hz cannot resolve a {} Hz dither (need fs > 2f)",
                modulation.freq
            )));
        }
        Ok(Self {
            modulation,
            disturbance: Disturbance::new(disturbance, fs, seed),
            fs,
            k: 0,
        })
    }

    pub fn modulation(&self) -> &ModulationSpec {
        &self.modulation
    }

    #[inline]
    pub fn next_sample(&mut self, control: f64) -> PhaseSample {
        let cycles = ((self.k as f64) * self.modulation.freq / self.fs).fract();
        self.k += 1;
        let dither = libm::sin(2.0 * PI * cycles);
        let slow = self.modulation.theta0 + self.disturbance.next_value() + control;
        PhaseSample {
            total: slow + self.modulation.depth * dither,
            slow,
            dither,
        }
    }
}

/// Samples θ[k] for `n` points. `control` is either empty (open loop) or has
/// exactly `n` entries.
pub fn phase_trajectory(
    modulation: &ModulationSpec,
    disturbance: &DisturbanceSpec,
    control: &[f64],
    fs: f64,
    n: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    if !control.is_empty() && control.len() != n {
        return Err(Error::Input(format!("control has {} samples, expected {n}", control.len())));
    }
    if let Some(i) = control.iter().position(|c| !c.is_finite()) {
        return Err(Error::Input(format!("control sample {i} is not finite")));
    }
    let mut model = PhaseModel::new(*modulation, *disturbance, fs, seed)?;
    Ok((0..n)
        .map(|k| model.next_sample(control.get(k).copied().unwrap_or(0.0)).total)
        .collect())
}

/// Wraps `x` into (-period/2, period/2].
pub fn wrap_phase(x: f64, period: f64) -> f64 {
    let r = x - period * (x / period).round();
    if r <= -period / 2.0 {
        r + period
    } else {
        r
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn vacuum_is_shot_noise() {
        let spec = SqueezedStateSpec::new(0.0, Quadrature::Amplitude, 0.0).unwrap();
        let v = quadrature_variances(&spec);
        assert_eq!((v.v1, v.v2), (1.0, 1.0));
    }

    #[test]
    fn measured_squeezing_level() {
        // 3.6 dB of squeezing corresponds to R = 0.41.
        let spec = SqueezedStateSpec::new(0.41, Quadrature::Amplitude, 0.0).unwrap();
        let v = quadrature_variances(&spec);
        assert!(close(v.v1, 0.4404, 5e-5), "{}", v.v1);
        assert!(close(v.v2, 2.2705, 5e-5), "{}", v.v2);
        let (db1, db2) = v.in_db();
        assert!(close(db1, -3.56, 0.005) && close(db2, 3.56, 0.005));
    }

    #[test]
    fn loss_transform_value() {
        // Hand computation: 0.5·e^{∓0.82} + 0.5.
        let spec = SqueezedStateSpec::new(0.41, Quadrature::Amplitude, 0.5).unwrap();
        let v = quadrature_variances(&spec);
        let hand = (0.5 * 0.440_431_7 + 0.5, 0.5 * 2.270_499_8 + 0.5);
        assert!(close(v.v1, hand.0, 1e-6) && close(v.v2, hand.1, 1e-6));
        assert!(close(v.v1, 0.7202, 1e-4) && close(v.v2, 1.6352, 1e-4));
    }

    #[test]
    fn rejects_bad_state() {
        assert!(SqueezedStateSpec::new(0.3, Quadrature::Amplitude, 1.0).is_err());
        assert!(SqueezedStateSpec::new(0.3, Quadrature::Amplitude, -0.1).is_err());
        assert!(SqueezedStateSpec::new(-0.1, Quadrature::Amplitude, 0.0).is_err());
        assert!(QuadratureVariances::new(0.0, 1.0).is_err());
    }

    #[test]
    fn homodyne_examples() {
        let v = QuadratureVariances::new(0.4404, 2.2705).unwrap();
        assert!(close(homodyne_variance(&v, PI / 2.0), 0.4404, 1e-12));
        assert!(close(homodyne_variance(&v, PI / 4.0), 1.35545, 1e-9));
        let shot = QuadratureVariances::shot_noise();
        for k in 0..16 {
            assert!(close(homodyne_variance(&shot, k as f64 * 0.4), 1.0, 1e-15));
        }
    }

    #[test]
    fn two_field_reduces_to_strong_lo_limit() {
        let a = QuadratureVariances::new(0.44, 2.27).unwrap();
        let b = QuadratureVariances::shot_noise();
        for k in 0..12 {
            let th = 0.3 * k as f64;
            let exact = homodyne_variance_two_field(&a, &b, 1e-4, 1.0, th);
            assert!(close(exact, homodyne_variance(&a, th), 1e-7));
        }
    }

    #[test]
    fn fringe_examples() {
        let pair = CoherentPairSpec::new(1.0, 1.0).unwrap();
        assert!(close(fringe_power(&pair, PI / 2.0, Port::D), 2.0, 1e-12));
        assert!(close(fringe_power(&pair, PI / 2.0, Port::C), 0.0, 1e-12));

        let pair = CoherentPairSpec::from_visibility(0.6, 2.0).unwrap();
        assert!(close(pair.visibility(), 0.6, 1e-12));
        let hi = fringe_power(&pair, PI / 2.0, Port::D);
        let lo = fringe_power(&pair, 3.0 * PI / 2.0, Port::D);
        assert!(close(hi / lo, 4.0, 1e-9));
        assert!(close(10.0 * (hi / lo).log10(), 6.02, 0.005));

        let pair = CoherentPairSpec::new(1.0, 0.0).unwrap();
        for k in 0..8 {
            let th = 0.8 * k as f64;
            assert!(close(fringe_power(&pair, th, Port::C), 0.5, 1e-15));
            assert!(close(fringe_power(&pair, th, Port::D), 0.5, 1e-15));
        }
    }

    #[test]
    fn visibility_one_iff_balanced() {
        assert!(close(CoherentPairSpec::new(0.7, 0.7).unwrap().visibility(), 1.0, 1e-15));
        assert!(CoherentPairSpec::new(0.7, 0.69).unwrap().visibility() < 1.0);
        assert_eq!(CoherentPairSpec::new(0.0, 0.0).unwrap().visibility(), 0.0);
    }

    #[test]
    fn static_phase_without_dither() {
        let m = ModulationSpec::new(0.3, 0.0, 1e3, 0.0).unwrap();
        let th = phase_trajectory(&m, &DisturbanceSpec::None, &[], 1e5, 100, 1).unwrap();
        assert!(th.iter().all(|&t| t == 0.3));
    }

    #[test]
    fn dither_is_pure_sinusoid() {
        let m = ModulationSpec::new(0.0, 0.045, 1e3, 0.0).unwrap();
        let fs = 1e5;
        let th = phase_trajectory(&m, &DisturbanceSpec::None, &[], fs, 1000, 1).unwrap();
        let peak = th.iter().cloned().fold(0.0f64, |a, b| a.max(b.abs()));
        assert!(close(peak, 0.045, 1e-12));
        for (k, t) in th.iter().enumerate() {
            let expect = 0.045 * (2.0 * PI * 1e3 * k as f64 / fs).sin();
            assert!(close(*t, expect, 1e-12));
        }
    }

    #[test]
    fn control_adds_to_phase() {
        let m = ModulationSpec::new(0.1, 0.0, 1e3, 0.0).unwrap();
        let control: Vec<f64> = (0..10).map(|k| k as f64 * 0.01).collect();
        let th = phase_trajectory(&m, &DisturbanceSpec::None, &control, 1e5, 10, 1).unwrap();
        for k in 0..10 {
            assert!(close(th[k], 0.1 + control[k], 1e-15));
        }
        let bad = vec![f64::NAN; 10];
        assert!(phase_trajectory(&m, &DisturbanceSpec::None, &bad, 1e5, 10, 1).is_err());
        assert!(phase_trajectory(&m, &DisturbanceSpec::None, &control, 1e5, 11, 1).is_err());
    }

    #[test]
    fn rejects_unresolvable_dither() {
        let m = ModulationSpec::new(0.0, 0.1, 1e3, 0.0).unwrap();
        assert!(phase_trajectory(&m, &DisturbanceSpec::None, &[], 1.5e3, 10, 1).is_err());
    }

    #[test]
    fn random_walk_variance_law() {
        // Ensemble over 200 seeds; Var[θ_k - θ₀] should be D·k/fs.
        let d = 0.5;
        let fs = 1e3;
        let m = ModulationSpec::new(0.0, 0.0, 10.0, 0.0).unwrap();
        let dist = DisturbanceSpec::RandomWalk { diffusion: d };
        let n = 401;
        let seeds = 200;
        let mut sum_sq = vec![0.0; n];
        for seed in 0..seeds {
            let th = phase_trajectory(&m, &dist, &[], fs, n, seed).unwrap();
            for (acc, t) in sum_sq.iter_mut().zip(&th) {
                *acc += t * t;
            }
        }
        for &k in &[100usize, 200, 400] {
            let var = sum_sq[k] / seeds as f64;
            let expect = d * k as f64 / fs;
            // Sample variance of 200 normals has ~10% relative std.
            assert!((var / expect - 1.0).abs() < 0.3, "k={k}: {var} vs {expect}");
        }
    }

    #[test]
    fn trajectory_reproducible() {
        let m = ModulationSpec::new(0.2, 0.05, 50.0, 0.0).unwrap();
        let dist = DisturbanceSpec::RandomWalk { diffusion: 0.1 };
        let a = phase_trajectory(&m, &dist, &[], 1e4, 500, 9).unwrap();
        let b = phase_trajectory(&m, &dist, &[], 1e4, 500, 9).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = phase_trajectory(&m, &dist, &[], 1e4, 500, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn wrap_phase_range() {
        assert!(close(wrap_phase(3.0 * PI / 2.0, PI), PI / 2.0, 1e-12));
        assert!(close(wrap_phase(0.1 + 4.0 * PI, 2.0 * PI), 0.1, 1e-12));
        assert!(close(wrap_phase(-0.1 - PI, PI), -0.1, 1e-12));
    }

    proptest! {
        #[test]
        fn homodyne_bounded_and_pi_periodic(v1 in 0.01f64..20.0, v2 in 0.01f64..20.0, th in -10.0f64..10.0) {
            let v = QuadratureVariances::new(v1, v2).unwrap();
            let h = homodyne_variance(&v, th);
            prop_assert!(h >= v.min() - 1e-12 && h <= v.max() + 1e-12);
            prop_assert!((h - homodyne_variance(&v, th + PI)).abs() < 1e-9);
        }

        #[test]
        fn swapping_convention_swaps_variances(r in 0.0f64..2.0, loss in 0.0f64..0.99) {
            let a = quadrature_variances(&SqueezedStateSpec::new(r, Quadrature::Amplitude, loss).unwrap());
            let p = quadrature_variances(&SqueezedStateSpec::new(r, Quadrature::Phase, loss).unwrap());
            prop_assert_eq!(a, p.swapped());
            prop_assert!(a.min() >= loss - 1e-12);
        }

        #[test]
        fn full_loss_gives_vacuum(r in 0.0f64..3.0) {
            let v = quadrature_variances(&SqueezedStateSpec::new(r, Quadrature::Amplitude, 1.0 - 1e-12).unwrap());
            prop_assert!((v.v1 - 1.0).abs() < 1e-9 && (v.v2 - 1.0).abs() < 1e-9);
        }

        #[test]
        fn beamsplitter_conserves_power(a in 0.0f64..3.0, b in 0.0f64..3.0, th in -10.0f64..10.0) {
            let pair = CoherentPairSpec::new(a, b).unwrap();
            let sum = fringe_power(&pair, th, Port::C) + fringe_power(&pair, th, Port::D);
            prop_assert!((sum - pair.total_power()).abs() < 1e-9 * (1.0 + pair.total_power()));
            prop_assert!(pair.visibility() <= 1.0 + 1e-12);
        }
    }
}
