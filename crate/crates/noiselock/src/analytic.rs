//! Closed-form error signals and lock-stability predictions.
//!
//! These are the oracles the simulation is checked against. Error-signal
//! amplitudes are in arbitrary units (they scale with the local-oscillator
//! power and detection bandwidth), so comparisons with the simulated chain
//! fit one gain and then test shape.
//!
//! ## Bandwidth convention
//!
//! The stability formulas contain the detection bandwidth Δω inside a fourth
//! root. Here it is the dimensionless *bandwidth product* `N`: the number of
//! independent noise samples averaged into one error-point reading (detection
//! bandwidth × averaging time). A Gaussian variance estimated from `N`
//! samples has standard deviation `√(2/N)·V`, which reduces to the
//! single-sample kurtosis `√2·V` at `N = 1`.

use std::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use crate::error::{Error, Result};
use crate::plant::{CoherentPairSpec, QuadratureVariances, SMALL_DEPTH_LIMIT};

/// Bessel functions J₀(x), J₁(x) by power series.
///
/// The series alternate with terms that decrease monotonically once
/// `k > |x|/2`, so truncation error is below the first omitted term; the loop
/// stops when that term drops under 1e-17 of the running sum. For |x| ≤ 10
/// cancellation costs at most ~1e-13 absolute.
pub fn bessel_j0_j1(x: f64) -> (f64, f64) {
    let q = -0.25 * x * x;
    let (mut t0, mut t1) = (1.0, 0.5 * x);
    let (mut j0, mut j1) = (t0, t1);
    for k in 1..200 {
        let kf = k as f64;
        t0 *= q / (kf * kf);
        t1 *= q / (kf * (kf + 1.0));
        j0 += t0;
        j1 += t1;
        if kf > 0.5 * x.abs() && t0.abs() <= 1e-17 * j0.abs().max(1e-300) && t1.abs() <= 1e-17 * j1.abs().max(1e-300) {
            break;
        }
    }
    (j0, j1)
}

fn warn_depth(depth: f64) {
    if depth > SMALL_DEPTH_LIMIT {
        log::warn!("dither depth {depth} rad exceeds the small-depth limit {SMALL_DEPTH_LIMIT} rad");
    }
}

/// Homodyne noise-locking error signal
/// `ε = b̄² J₀(θ₁) J₁(θ₁) sin 2θ₀ (V⁽¹⁾ − V⁽²⁾) Δω`.
///
/// Depths above 0.2 rad are evaluated but logged as outside the expansion.
pub fn error_signal_homodyne(vars: &QuadratureVariances, theta0: f64, depth: f64, lo_amp: f64, bandwidth: f64) -> f64 {
    warn_depth(depth);
    let (j0, j1) = bessel_j0_j1(depth);
    lo_amp * lo_amp * j0 * j1 * (2.0 * theta0).sin() * (vars.v1 - vars.v2) * bandwidth
}

/// Coherent-fringe noise-locking error signal `ε = ā b̄ J₁(θ₁) cos θ₀ Δω`.
pub fn error_signal_coherent(pair: &CoherentPairSpec, theta0: f64, depth: f64, bandwidth: f64) -> f64 {
    warn_depth(depth);
    let (_, j1) = bessel_j0_j1(depth);
    pair.amp_a() * pair.amp_b() * j1 * theta0.cos() * bandwidth
}

/// Spread of a single-sample variance estimate for Gaussian noise,
/// `√(⟨δX⁴⟩ − ⟨δX²⟩²) = √2·V`.
pub fn kurtosis_of_variance(variance: f64) -> f64 {
    SQRT_2 * variance
}

/// Phase excursion whose second-order variance change equals the noise on
/// the variance: `Δθ = √(ΔV / |½ V''|)`.
///
/// At a lock point the first derivative of the variance vanishes, so the
/// quadratic term is what converts variance noise into phase.
pub fn curvature_limited_phase(noise_on_noise: f64, half_curvature: f64) -> f64 {
    (noise_on_noise / half_curvature.abs()).sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LockPoint {
    Squeezed,
    AntiSqueezed,
    DarkFringe,
    BrightFringe,
}

impl LockPoint {
    /// Nominal phase for amplitude squeezing and detection on port D:
    /// squeezed π/2, anti-squeezed 0, dark 3π/2, bright π/2.
    pub fn nominal_phase(self) -> f64 {
        match self {
            LockPoint::Squeezed => FRAC_PI_2,
            LockPoint::AntiSqueezed => 0.0,
            LockPoint::DarkFringe => 3.0 * FRAC_PI_2,
            LockPoint::BrightFringe => FRAC_PI_2,
        }
    }

    /// Whether the detected noise power is minimal at this point.
    pub fn is_minimum(self) -> bool {
        matches!(self, LockPoint::Squeezed | LockPoint::DarkFringe)
    }

    /// Error-signal period: π for homodyne, 2π for coherent fringes.
    pub fn period(self) -> f64 {
        match self {
            LockPoint::Squeezed | LockPoint::AntiSqueezed => PI,
            LockPoint::DarkFringe | LockPoint::BrightFringe => 2.0 * PI,
        }
    }

    /// The other lock point of the same error signal.
    pub fn partner(self) -> Self {
        match self {
            LockPoint::Squeezed => LockPoint::AntiSqueezed,
            LockPoint::AntiSqueezed => LockPoint::Squeezed,
            LockPoint::DarkFringe => LockPoint::BrightFringe,
            LockPoint::BrightFringe => LockPoint::DarkFringe,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LockPoint::Squeezed => "squeezed",
            LockPoint::AntiSqueezed => "anti_squeezed",
            LockPoint::DarkFringe => "dark_fringe",
            LockPoint::BrightFringe => "bright_fringe",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "squeezed" => Some(LockPoint::Squeezed),
            "anti_squeezed" => Some(LockPoint::AntiSqueezed),
            "dark_fringe" => Some(LockPoint::DarkFringe),
            "bright_fringe" => Some(LockPoint::BrightFringe),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StabilityPrediction {
    pub delta_theta: f64,
    pub lock_point: LockPoint,
    /// The fourth-root bandwidth multiplier that was applied.
    pub bandwidth_factor: f64,
}

/// Stability at the two homodyne lock points for a single-sample readout:
/// `Δθ_sq = √(√2 V_min/(V_max − V_min))`, `Δθ_anti = √(√2 V_max/(V_max − V_min))`.
///
/// The smaller variance is treated as the squeezed quadrature whichever
/// convention the variances follow.
pub fn stability_homodyne(vars: &QuadratureVariances) -> Result<(StabilityPrediction, StabilityPrediction)> {
    stability_homodyne_with_product(vars, 1.0)
}

/// [`stability_homodyne`] scaled by `N^{-1/4}` for a bandwidth product `N`.
pub fn stability_homodyne_with_product(
    vars: &QuadratureVariances,
    bandwidth_product: f64,
) -> Result<(StabilityPrediction, StabilityPrediction)> {
    check_product(bandwidth_product)?;
    let (lo, hi) = (vars.min(), vars.max());
    let gap = hi - lo;
    if gap <= f64::EPSILON * hi {
        return Err(Error::NoAsymmetry);
    }
    let factor = bandwidth_product.powf(-0.25);
    Ok((
        StabilityPrediction {
            delta_theta: (SQRT_2 * lo / gap).sqrt() * factor,
            lock_point: LockPoint::Squeezed,
            bandwidth_factor: factor,
        },
        StabilityPrediction {
            delta_theta: (SQRT_2 * hi / gap).sqrt() * factor,
            lock_point: LockPoint::AntiSqueezed,
            bandwidth_factor: factor,
        },
    ))
}

fn check_product(n: f64) -> Result<()> {
    if !(n.is_finite() && n > 0.0) {
        return Err(Error::param("bandwidth_product", format!("must be finite and > 0, got {n}")));
    }
    Ok(())
}

/// Squeezed and anti-squeezed lock stability in terms of squeeze factor,
/// loss and bandwidth product (amplitude squeezing):
///
/// ```text
/// Δθ_sq   = √[(1 + λ/(1−λ) e^{2R}) / (e^{4R} − 1)] · (2/N)^{1/4}
/// Δθ_anti = √[(1 + λ/(1−λ) e^{−2R}) / (1 − e^{−4R})] · (2/N)^{1/4}
/// ```
pub fn stability_homodyne_scaled(
    squeeze_factor: f64,
    loss: f64,
    bandwidth_product: f64,
) -> Result<(StabilityPrediction, StabilityPrediction)> {
    if !(squeeze_factor.is_finite() && squeeze_factor > 0.0) {
        return Err(Error::param("squeeze_factor", format!("must be > 0 for a defined stability, got {squeeze_factor}")));
    }
    if !(0.0..1.0).contains(&loss) {
        return Err(Error::param("loss_lambda", format!("must lie in [0, 1), got {loss}")));
    }
    check_product(bandwidth_product)?;
    let r = squeeze_factor;
    let mix = loss / (1.0 - loss);
    let factor = (2.0 / bandwidth_product).powf(0.25);
    let sq = ((1.0 + mix * (2.0 * r).exp()) / (4.0 * r).exp_m1()).sqrt() * factor;
    let anti = ((1.0 + mix * (-2.0 * r).exp()) / -(-4.0 * r).exp_m1()).sqrt() * factor;
    Ok((
        StabilityPrediction {
            delta_theta: sq,
            lock_point: LockPoint::Squeezed,
            bandwidth_factor: factor,
        },
        StabilityPrediction {
            delta_theta: anti,
            lock_point: LockPoint::AntiSqueezed,
            bandwidth_factor: factor,
        },
    ))
}

/// Dark- and bright-fringe stability for coherent noise locking:
/// `√(√2 (ā ∓ b̄)²/(ā b̄)) · (1/N)^{1/4}`.
pub fn stability_coherent(
    pair: &CoherentPairSpec,
    bandwidth_product: f64,
) -> Result<(StabilityPrediction, StabilityPrediction)> {
    let (a, b) = (pair.amp_a(), pair.amp_b());
    if a <= 0.0 || b <= 0.0 {
        return Err(Error::param("amplitudes", "both coherent amplitudes must be > 0"));
    }
    check_product(bandwidth_product)?;
    let factor = bandwidth_product.powf(-0.25);
    let dark = (SQRT_2 * (a - b).powi(2) / (a * b)).sqrt() * factor;
    let bright = (SQRT_2 * (a + b).powi(2) / (a * b)).sqrt() * factor;
    Ok((
        StabilityPrediction {
            delta_theta: dark,
            lock_point: LockPoint::DarkFringe,
            bandwidth_factor: factor,
        },
        StabilityPrediction {
            delta_theta: bright,
            lock_point: LockPoint::BrightFringe,
            bandwidth_factor: factor,
        },
    ))
}

/// An error signal sampled on a grid of average phases.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorSignalCurve {
    pub theta0: Vec<f64>,
    pub epsilon: Vec<f64>,
}

impl ErrorSignalCurve {
    pub fn homodyne(vars: &QuadratureVariances, grid: &[f64], depth: f64, lo_amp: f64, bandwidth: f64) -> Self {
        Self {
            theta0: grid.to_vec(),
            epsilon: grid
                .iter()
                .map(|&t| error_signal_homodyne(vars, t, depth, lo_amp, bandwidth))
                .collect(),
        }
    }

    pub fn coherent(pair: &CoherentPairSpec, grid: &[f64], depth: f64, bandwidth: f64) -> Self {
        Self {
            theta0: grid.to_vec(),
            epsilon: grid
                .iter()
                .map(|&t| error_signal_coherent(pair, t, depth, bandwidth))
                .collect(),
        }
    }

    /// Zero crossings located by linear interpolation between grid points,
    /// with the sign of the slope at each crossing.
    pub fn zero_crossings(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for i in 0..self.theta0.len().saturating_sub(1) {
            let (t0, t1) = (self.theta0[i], self.theta0[i + 1]);
            let (e0, e1) = (self.epsilon[i], self.epsilon[i + 1]);
            if e0 == 0.0 {
                out.push((t0, (e1 - e0).signum()));
            } else if e0 * e1 < 0.0 {
                let t = t0 + (t1 - t0) * e0 / (e0 - e1);
                out.push((t, (e1 - e0).signum()));
            }
        }
        out
    }
}

/// Uniform grid of `n` points on [start, end).
pub fn phase_grid(start: f64, end: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + (end - start) * i as f64 / n as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{quadrature_variances, Quadrature, SqueezedStateSpec};
    use crate::rng::NoiseStream;
    use proptest::prelude::*;

    /// Independent oracle: J_n(x) = (1/π) ∫₀^π cos(nτ − x sin τ) dτ.
    /// The integrand is smooth and periodic, so the trapezoid rule converges
    /// geometrically.
    fn bessel_by_quadrature(n: i32, x: f64) -> f64 {
        let m = 4000;
        let h = PI / m as f64;
        let f = |t: f64| (n as f64 * t - x * t.sin()).cos();
        let mut s = 0.5 * (f(0.0) + f(PI));
        for i in 1..m {
            s += f(i as f64 * h);
        }
        s * h / PI
    }

    #[test]
    fn bessel_at_zero() {
        assert_eq!(bessel_j0_j1(0.0), (1.0, 0.0));
    }

    #[test]
    fn bessel_small_depth_matches_series_oracle() {
        let x: f64 = 0.045;
        let j0 = 1.0 - x.powi(2) / 4.0 + x.powi(4) / 64.0 - x.powi(6) / 2304.0;
        let j1 = x / 2.0 - x.powi(3) / 16.0 + x.powi(5) / 384.0;
        let (a, b) = bessel_j0_j1(x);
        assert!((a - j0).abs() < 1e-12 && (b - j1).abs() < 1e-12);
        assert!((a - 0.99949).abs() < 5e-6 && (b - 0.0224943).abs() < 5e-8);
    }

    #[test]
    fn bessel_at_one_matches_tables() {
        let (a, b) = bessel_j0_j1(1.0);
        assert!((a - 0.7651976866).abs() < 1e-10);
        assert!((b - 0.4400505857).abs() < 1e-10);
    }

    #[test]
    fn bessel_matches_quadrature_on_range() {
        for i in 0..=100 {
            let x = -10.0 + 0.2 * i as f64;
            let (j0, j1) = bessel_j0_j1(x);
            let (q0, q1) = (bessel_by_quadrature(0, x), bessel_by_quadrature(1, x));
            assert!((j0 - q0).abs() < 1e-11, "J0({x}): {j0} vs {q0}");
            assert!((j1 - q1).abs() < 1e-11, "J1({x}): {j1} vs {q1}");
        }
    }

    #[test]
    fn homodyne_error_examples() {
        let flat = QuadratureVariances::shot_noise();
        for i in 0..20 {
            assert_eq!(error_signal_homodyne(&flat, 0.3 * i as f64, 0.045, 1.0, 1.0), 0.0);
        }
        let v = QuadratureVariances::new(0.4404, 2.2705).unwrap();
        assert_eq!(error_signal_homodyne(&v, 0.0, 0.045, 1.0, 1.0), 0.0);
        let e = error_signal_homodyne(&v, PI / 4.0, 0.045, 1.0, 1.0);
        let (j0, j1) = (0.999_493_8, 0.022_494_3);
        assert!((e - j0 * j1 * (0.4404 - 2.2705)).abs() < 1e-7);
        assert!((e + 0.04115).abs() < 5e-6, "{e}");
    }

    #[test]
    fn coherent_error_examples() {
        let pair = CoherentPairSpec::new(1.0, 1.0).unwrap();
        assert!(error_signal_coherent(&pair, PI / 2.0, 0.045, 1.0).abs() < 1e-15);
        assert!((error_signal_coherent(&pair, 0.0, 0.045, 1.0) - 0.0224943).abs() < 5e-8);
        let dark = CoherentPairSpec::new(0.0, 1.0).unwrap();
        for i in 0..10 {
            assert_eq!(error_signal_coherent(&dark, 0.7 * i as f64, 0.045, 1.0), 0.0);
        }
    }

    #[test]
    fn kurtosis_examples() {
        assert!((kurtosis_of_variance(1.0) - 1.41421).abs() < 1e-5);
        assert_eq!(kurtosis_of_variance(0.0), 0.0);
        assert!((kurtosis_of_variance(2.2705) - 3.2110).abs() < 1e-4);
    }

    #[test]
    fn kurtosis_monte_carlo_oracle() {
        let v: f64 = 2.2705;
        let mut rng = NoiseStream::new(11, 0);
        let n = 1_000_000;
        let (mut m2, mut m4) = (0.0, 0.0);
        for _ in 0..n {
            let x = v.sqrt() * rng.gaussian();
            m2 += x * x;
            m4 += x * x * x * x;
        }
        let (m2, m4) = (m2 / n as f64, m4 / n as f64);
        let mc = (m4 - m2 * m2).sqrt();
        assert!((mc / kurtosis_of_variance(v) - 1.0).abs() < 0.01, "{mc}");
    }

    #[test]
    fn stability_examples() {
        let v = QuadratureVariances::new(0.4404, 2.2705).unwrap();
        let (sq, anti) = stability_homodyne(&v).unwrap();
        assert!((sq.delta_theta - 0.5834).abs() < 5e-5, "{}", sq.delta_theta);
        assert!((anti.delta_theta - 1.3246).abs() < 5e-5, "{}", anti.delta_theta);

        let spec = SqueezedStateSpec::new(0.41, Quadrature::Amplitude, 0.0).unwrap();
        let v = quadrature_variances(&spec);
        let (sq, anti) = stability_homodyne(&v).unwrap();
        assert!((sq.delta_theta / anti.delta_theta - (-0.82f64).exp()).abs() < 1e-12);
        assert!((sq.delta_theta / anti.delta_theta - 0.4404).abs() < 5e-5);

        let big = QuadratureVariances::new(0.5, 1e9).unwrap();
        assert!(stability_homodyne(&big).unwrap().0.delta_theta < 1e-4);

        assert!(matches!(stability_homodyne(&QuadratureVariances::shot_noise()), Err(Error::NoAsymmetry)));
    }

    #[test]
    fn scaled_stability_examples() {
        let (sq, anti) = stability_homodyne_scaled(0.41, 0.0, 2.0).unwrap();
        assert!((sq.delta_theta - (1.0 / (1.64f64.exp() - 1.0)).sqrt()).abs() < 1e-12);
        assert!((sq.delta_theta - 0.49058).abs() < 5e-5);
        assert!(anti.delta_theta > sq.delta_theta);

        let (_, anti) = stability_homodyne_scaled(8.0, 0.0, 2.0).unwrap();
        assert!((anti.delta_theta - 1.0).abs() < 1e-6);
        let (_, anti) = stability_homodyne_scaled(8.0, 0.0, 1.0).unwrap();
        assert!((anti.delta_theta - 2f64.powf(0.25)).abs() < 1e-6);

        assert!(stability_homodyne_scaled(0.0, 0.0, 1.0).is_err());
        assert!(stability_homodyne_scaled(0.3, 1.0, 1.0).is_err());
        assert!(stability_homodyne_scaled(0.3, 0.0, 0.0).is_err());
    }

    #[test]
    fn scaled_form_agrees_with_variance_form() {
        for &(r, loss) in &[(0.2, 0.0), (0.41, 0.1), (1.0, 0.5), (1.5, 0.3)] {
            let spec = SqueezedStateSpec::new(r, Quadrature::Amplitude, loss).unwrap();
            let v = quadrature_variances(&spec);
            let (sq, anti) = stability_homodyne_with_product(&v, 3.0).unwrap();
            let (ssq, santi) = stability_homodyne_scaled(r, loss, 3.0).unwrap();
            assert!((sq.delta_theta - ssq.delta_theta).abs() < 1e-12);
            assert!((anti.delta_theta - santi.delta_theta).abs() < 1e-12);
        }
    }

    #[test]
    fn coherent_stability_examples() {
        let pair = CoherentPairSpec::new(1.0, 1.0).unwrap();
        let (dark, bright) = stability_coherent(&pair, 1.0).unwrap();
        assert_eq!(dark.delta_theta, 0.0);
        assert!((bright.delta_theta - (4.0 * SQRT_2).sqrt()).abs() < 1e-12);
        assert!((bright.delta_theta - 2.3784).abs() < 5e-5);
        assert!(stability_coherent(&CoherentPairSpec::new(0.0, 1.0).unwrap(), 1.0).is_err());
    }

    #[test]
    fn curve_zero_crossings() {
        let v = QuadratureVariances::new(0.44, 2.27).unwrap();
        let grid = phase_grid(-0.1, PI - 0.1, 64);
        let curve = ErrorSignalCurve::homodyne(&v, &grid, 0.05, 1.0, 1.0);
        let z = curve.zero_crossings();
        assert_eq!(z.len(), 2);
        assert!(z[0].0.abs() < 1e-3 && (z[1].0 - PI / 2.0).abs() < 1e-3);
        assert_eq!(z[0].1, -z[1].1);
    }

    proptest! {
        #[test]
        fn squeezed_lock_beats_anti_squeezed(r in 0.01f64..3.0, loss in 0.0f64..0.99, n in 0.1f64..1e6) {
            let (sq, anti) = stability_homodyne_scaled(r, loss, n).unwrap();
            prop_assert!(sq.delta_theta < anti.delta_theta);
        }

        #[test]
        fn stability_monotone(r in 0.05f64..2.5, loss in 0.0f64..0.9, n in 0.5f64..1e5) {
            let (sq, anti) = stability_homodyne_scaled(r, loss, n).unwrap();
            let (sq_r, anti_r) = stability_homodyne_scaled(r * 1.05, loss, n).unwrap();
            let (sq_n, anti_n) = stability_homodyne_scaled(r, loss, n * 1.5).unwrap();
            let (sq_l, anti_l) = stability_homodyne_scaled(r, loss + 0.05, n).unwrap();
            prop_assert!(sq_r.delta_theta < sq.delta_theta && anti_r.delta_theta < anti.delta_theta);
            prop_assert!(sq_n.delta_theta < sq.delta_theta && anti_n.delta_theta < anti.delta_theta);
            prop_assert!(sq_l.delta_theta > sq.delta_theta && anti_l.delta_theta > anti.delta_theta);
        }

        #[test]
        fn bandwidth_fourth_root(r in 0.05f64..2.0, loss in 0.0f64..0.9, n in 0.5f64..1e4, k in 1.1f64..100.0,
                                 a in 0.1f64..3.0, b in 0.1f64..3.0) {
            let expect = k.powf(-0.25);
            let (s1, a1) = stability_homodyne_scaled(r, loss, n).unwrap();
            let (s2, a2) = stability_homodyne_scaled(r, loss, n * k).unwrap();
            prop_assert!((s2.delta_theta / s1.delta_theta - expect).abs() < 1e-12);
            prop_assert!((a2.delta_theta / a1.delta_theta - expect).abs() < 1e-12);
            let pair = CoherentPairSpec::new(a, b).unwrap();
            let (d1, b1) = stability_coherent(&pair, n).unwrap();
            let (d2, b2) = stability_coherent(&pair, n * k).unwrap();
            prop_assert!((b2.delta_theta / b1.delta_theta - expect).abs() < 1e-12);
            if d1.delta_theta > 0.0 {
                prop_assert!((d2.delta_theta / d1.delta_theta - expect).abs() < 1e-12);
            }
        }

        #[test]
        fn fringe_stability_ratio(a in 0.1f64..3.0, b in 0.1f64..3.0) {
            prop_assume!((a - b).abs() > 1e-3);
            let pair = CoherentPairSpec::new(a, b).unwrap();
            let (d, br) = stability_coherent(&pair, 2.0).unwrap();
            prop_assert!((br.delta_theta / d.delta_theta - (a + b) / (a - b).abs()).abs() < 1e-9 * (a + b) / (a - b).abs());
        }

        #[test]
        fn kurtosis_homogeneous(v in 0.0f64..100.0, c in 0.0f64..100.0) {
            prop_assert!((kurtosis_of_variance(c * v) - c * kurtosis_of_variance(v)).abs() < 1e-12 * (1.0 + c * v));
        }

        #[test]
        fn opposite_slopes_at_homodyne_crossings(v1 in 0.05f64..10.0, v2 in 0.05f64..10.0, depth in 0.001f64..0.2) {
            prop_assume!((v1 - v2).abs() > 1e-3);
            let v = QuadratureVariances::new(v1, v2).unwrap();
            let h = 1e-6;
            let slope = |t: f64| (error_signal_homodyne(&v, t + h, depth, 1.0, 1.0) - error_signal_homodyne(&v, t - h, depth, 1.0, 1.0)) / (2.0 * h);
            let (s0, s1) = (slope(0.0), slope(PI / 2.0));
            prop_assert!((s0 + s1).abs() < 1e-6 * s0.abs().max(1e-12));
        }
    }
}
