use std::f64::consts::PI;
use std::fmt::Write as _;

use super::servo::{Servo, ServoConfig};
use crate::analytic::LockPoint;
use crate::dsp::{welch_psd, DspChainConfig, NlChain, Spectrum};
use crate::error::{Error, Result};
use crate::plant::{quadrature_variances, wrap_phase, Port};
use crate::timeseries::{Channel, SimTrace, SourceMode, SynthesisConfig, Synthesizer};

/// Phase of a lock point for the configured source.
///
/// Homodyne points follow whichever quadrature carries the squeezing;
/// fringes follow the detected port (port D is bright at π/2).
pub fn lock_phase(mode: &SourceMode, point: LockPoint) -> Result<f64> {
    match (mode, point) {
        (SourceMode::HomodyneSqueezed(spec), LockPoint::Squeezed) => Ok(quadrature_variances(spec).squeezed_angle()),
        (SourceMode::HomodyneSqueezed(spec), LockPoint::AntiSqueezed) => {
            Ok(quadrature_variances(spec).anti_squeezed_angle())
        }
        (SourceMode::Coherent { port, .. }, LockPoint::BrightFringe) => Ok(match port {
            Port::D => PI / 2.0,
            Port::C => 3.0 * PI / 2.0,
        }),
        (SourceMode::Coherent { port, .. }, LockPoint::DarkFringe) => Ok(match port {
            Port::D => 3.0 * PI / 2.0,
            Port::C => PI / 2.0,
        }),
        _ => Err(Error::Mode(format!(
            "lock point {} does not exist for {} mode",
            point.name(),
            mode.name()
        ))),
    }
}

/// Servo sign and demodulation phase that select `point`.
///
/// With the lock-in aligned, the error is `+dV/dθ`; a positive servo sign
/// then holds the noise minimum, and a demodulation phase of π turns the
/// maximum into the stable point instead.
pub fn lock_settings(point: LockPoint) -> (f64, f64) {
    if point.is_minimum() {
        (1.0, 0.0)
    } else {
        (1.0, PI)
    }
}

/// The lock point that a given servo sign and demodulation phase hold.
pub fn commanded_lock_point(mode: &SourceMode, sign: f64, demod_phase: f64) -> LockPoint {
    let minimum = sign * demod_phase.cos() > 0.0;
    match (mode, minimum) {
        (SourceMode::HomodyneSqueezed(_), true) => LockPoint::Squeezed,
        (SourceMode::HomodyneSqueezed(_), false) => LockPoint::AntiSqueezed,
        (SourceMode::Coherent { .. }, true) => LockPoint::DarkFringe,
        (SourceMode::Coherent { .. }, false) => LockPoint::BrightFringe,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PsdOptions {
    /// Error samples are block-averaged over this many samples first.
    pub decimation: usize,
    pub segment: usize,
}

/// Ramp-and-grab acquisition for loops whose capture range is small.
///
/// After `engage_at` the actuator sweeps a triangle ramp between the servo
/// limits instead of following the servo. When the error crosses zero with
/// the restoring slope the servo takes over from the current ramp value.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GrabOptions {
    /// Ramp speed in rad/s.
    pub rate: f64,
    /// The servo-signed error must swing from below `-hysteresis` to above
    /// `+hysteresis` (error units) to count as a crossing.
    pub hysteresis: f64,
}

struct Ramp {
    u: f64,
    step: f64,
    limit: f64,
    h: f64,
    armed: bool,
}

impl Ramp {
    fn new(g: GrabOptions, limit: f64, fs: f64) -> Self {
        Self {
            u: 0.0,
            step: g.rate / fs,
            limit,
            h: g.hysteresis,
            armed: false,
        }
    }

    /// Feeds one servo-signed error sample; returns true on a grab.
    ///
    /// That signal rises through zero at the commanded point as the phase
    /// increases, so a falling ramp looks for the mirrored crossing.
    fn step(&mut self, signed_error: f64) -> bool {
        let s = if self.step > 0.0 { signed_error } else { -signed_error };
        if s < -self.h {
            self.armed = true;
        } else if self.armed && s > self.h {
            return true;
        }
        self.u += self.step;
        if self.u.abs() >= self.limit {
            self.u = self.u.clamp(-self.limit, self.limit);
            self.step = -self.step;
            self.armed = false;
        }
        false
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LoopOptions {
    /// Time (s) at which the servo output is connected.
    pub engage_at: f64,
    /// Lock is declared when the windowed mean phase stays within this
    /// distance (rad) of the commanded point until the end of the run.
    pub acquisition_threshold: f64,
    /// Acquisition window, in dither periods.
    pub acquisition_periods: usize,
    /// Residual and noise statistics accumulate from this time (s).
    pub measure_from: f64,
    /// Error-signal slope at the lock point (error units per rad), used to
    /// express the in-loop error noise as phase.
    pub slope: Option<f64>,
    /// Envelope averaging window for the noise-on-noise estimate, in
    /// dither periods.
    pub nn_periods: usize,
    pub record_decimation: Option<usize>,
    pub psd: Option<PsdOptions>,
    pub grab: Option<GrabOptions>,
}

impl Default for LoopOptions {
    fn default() -> Self {
        Self {
            engage_at: 0.0,
            acquisition_threshold: 0.1,
            acquisition_periods: 10,
            measure_from: 0.0,
            slope: None,
            nn_periods: 2,
            record_decimation: None,
            psd: None,
            grab: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LockReport {
    pub target: LockPoint,
    pub acquired: bool,
    /// Start of the final in-threshold stretch, in seconds from t = 0.
    pub acquisition_time: Option<f64>,
    /// Nominal phase of the commanded lock point.
    pub lock_point: f64,
    /// Which zero crossing the run ended on, if any.
    pub locked_to: Option<LockPoint>,
    /// Mean slow phase over the final acquisition window, in [0, period).
    pub final_phase: f64,
    pub threshold: f64,
    /// Mean and RMS of the true phase about `locked_to` (or the target).
    pub residual_mean_true: f64,
    pub residual_rms_true: f64,
    pub error_mean: f64,
    pub error_rms: f64,
    /// In-loop error RMS divided by the slope, if a slope was supplied.
    pub residual_rms_inloop: Option<f64>,
    /// Spread (sample std) of envelope means over `nn_periods` windows.
    pub noise_on_noise: f64,
    pub envelope_mean: f64,
    pub measured_samples: usize,
    pub duration: f64,
    pub sample_rate: f64,
    pub error_signal_psd: Option<Spectrum>,
    /// When ramp-and-grab handed over to the servo, in seconds from t = 0.
    pub grabbed_at: Option<f64>,
}

impl LockReport {
    /// Flat `key = value` block; spectra are written separately.
    pub fn to_key_values(&self) -> String {
        let mut s = String::new();
        let opt = |v: Option<f64>| v.map_or("none".to_string(), |x| x.to_string());
        let _ = writeln!(s, "target = {}", self.target.name());
        let _ = writeln!(s, "acquired = {}", self.acquired);
        let _ = writeln!(s, "acquisition_time = {}", opt(self.acquisition_time));
        let _ = writeln!(s, "grabbed_at = {}", opt(self.grabbed_at));
        let _ = writeln!(s, "lock_point = {}", self.lock_point);
        let _ = writeln!(s, "locked_to = {}", self.locked_to.map_or("none", |p| p.name()));
        let _ = writeln!(s, "final_phase = {}", self.final_phase);
        let _ = writeln!(s, "threshold = {}", self.threshold);
        let _ = writeln!(s, "residual_mean_true = {}", self.residual_mean_true);
        let _ = writeln!(s, "residual_rms_true = {}", self.residual_rms_true);
        let _ = writeln!(s, "error_mean = {}", self.error_mean);
        let _ = writeln!(s, "error_rms = {}", self.error_rms);
        let _ = writeln!(s, "residual_rms_inloop = {}", opt(self.residual_rms_inloop));
        let _ = writeln!(s, "noise_on_noise = {}", self.noise_on_noise);
        let _ = writeln!(s, "envelope_mean = {}", self.envelope_mean);
        let _ = writeln!(s, "measured_samples = {}", self.measured_samples);
        let _ = writeln!(s, "duration = {}", self.duration);
        let _ = writeln!(s, "sample_rate = {}", self.sample_rate);
        s
    }
}

/// Closed loop with default options.
pub fn run_closed_loop(
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    servo: &ServoConfig,
    duration: f64,
) -> Result<(SimTrace, LockReport)> {
    run_closed_loop_with(synth, chain, servo, duration, &LoopOptions::default())
}

#[derive(Default)]
struct Moments {
    n: usize,
    s1: f64,
    s2: f64,
}

impl Moments {
    #[inline]
    fn push(&mut self, x: f64) {
        self.n += 1;
        self.s1 += x;
        self.s2 += x * x;
    }

    fn mean(&self) -> f64 {
        self.s1 / self.n.max(1) as f64
    }

    fn rms(&self) -> f64 {
        (self.s2 / self.n.max(1) as f64).sqrt()
    }
}

/// Runs synthesizer → readout chain → servo → actuator, one sample of
/// latency around the loop: the control applied at sample `k` was computed
/// from errors up to `k − 1`.
///
/// The effective lock-in reference phase is the chain's `ref_phase` plus
/// the modulation's `demod_phase`; together with the servo sign this
/// selects the commanded lock point (see [`commanded_lock_point`]).
pub fn run_closed_loop_with(
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    servo: &ServoConfig,
    duration: f64,
    opts: &LoopOptions,
) -> Result<(SimTrace, LockReport)> {
    let mut cfg = *synth;
    cfg.duration = duration;
    cfg.validate()?;
    cfg.check_band(chain.bandpass.f_high)?;
    let fs = cfg.fs;
    let n = cfg.n_samples();
    let mut ch = *chain;
    ch.lockin.ref_phase += cfg.modulation.demod_phase;
    let target = commanded_lock_point(&cfg.mode, servo.sign, cfg.modulation.demod_phase);
    let period = target.period();
    let phi_target = lock_phase(&cfg.mode, target)?;

    if !(opts.acquisition_threshold > 0.0) {
        return Err(Error::param("acquisition_threshold", "must be positive"));
    }
    if !(opts.measure_from >= 0.0 && opts.measure_from < duration) {
        return Err(Error::param(
            "measure_from",
            format!("{} s must lie inside the {duration} s run", opts.measure_from),
        ));
    }
    let samples_per_period = fs / cfg.modulation.freq;
    let acq_w = ((opts.acquisition_periods.max(1) as f64) * samples_per_period).round().max(1.0) as usize;
    let nn_w = ((opts.nn_periods.max(1) as f64) * samples_per_period).round().max(2.0) as usize;
    let engage = (opts.engage_at * fs).round() as usize;
    let measure_from = (opts.measure_from * fs).round() as usize;

    let mut syn = Synthesizer::new(&cfg)?;
    let mut nl = NlChain::new(&ch, fs)?;
    let mut sv = Servo::new(*servo, fs)?;
    if let Some(g) = opts.grab {
        if !(g.rate.is_finite() && g.rate > 0.0 && g.hysteresis >= 0.0) {
            return Err(Error::param("grab", "needs a positive ramp rate and a hysteresis >= 0"));
        }
    }
    let mut ramp = opts.grab.map(|g| Ramp::new(g, servo.limit, fs));
    let mut grabbed_at = None;

    let dec = opts.record_decimation.unwrap_or(0);
    let cap = if dec > 0 { n / dec + 1 } else { 0 };
    let mut rec: Vec<Vec<f64>> = (0..6).map(|_| Vec::with_capacity(cap)).collect();

    let (mut acq_sum, mut acq_count) = (0.0, 0usize);
    let mut run_start: Option<usize> = None;
    let mut last_window_mean = f64::NAN;
    let (mut dev_t, mut dev_p, mut err) = (Moments::default(), Moments::default(), Moments::default());
    let (mut nn_sum, mut nn_count) = (0.0, 0usize);
    let mut nn_means = Vec::new();
    let psd_dec = opts.psd.map_or(0, |p| p.decimation.max(1));
    let (mut psd_sum, mut psd_count) = (0.0, 0usize);
    let mut psd_series = Vec::new();

    for k in 0..n {
        let u = match &ramp {
            _ if k < engage => 0.0,
            Some(r) => r.u,
            None => sv.output(),
        };
        let s = syn.step(u);
        let c = nl.step(s.photocurrent);
        if k >= engage {
            match &mut ramp {
                Some(r) => {
                    if r.step(servo.sign * c.error) {
                        sv.preset_output(r.u);
                        grabbed_at = Some(k as f64 / fs);
                        ramp = None;
                    }
                }
                None => {
                    sv.update(c.error);
                }
            }
        }

        let d = wrap_phase(s.phase.slow - phi_target, period);
        acq_sum += d;
        acq_count += 1;
        if acq_count == acq_w {
            let m = acq_sum / acq_w as f64;
            last_window_mean = m;
            let start = k + 1 - acq_w;
            if start >= engage && m.abs() < opts.acquisition_threshold {
                run_start.get_or_insert(start);
            } else {
                run_start = None;
            }
            acq_sum = 0.0;
            acq_count = 0;
        }

        if k >= measure_from {
            dev_t.push(d);
            dev_p.push(wrap_phase(d - period / 2.0, period));
            err.push(c.error);
            nn_sum += c.envelope;
            nn_count += 1;
            if nn_count == nn_w {
                nn_means.push(nn_sum / nn_w as f64);
                nn_sum = 0.0;
                nn_count = 0;
            }
            if psd_dec > 0 {
                psd_sum += c.error;
                psd_count += 1;
                if psd_count == psd_dec {
                    psd_series.push(psd_sum / psd_dec as f64);
                    psd_sum = 0.0;
                    psd_count = 0;
                }
            }
        }

        if dec > 0 && k % dec == 0 {
            for (col, v) in rec
                .iter_mut()
                .zip([s.phase.slow, s.photocurrent, c.bpf, c.envelope, c.error, u])
            {
                col.push(v);
            }
        }
    }

    let acquired = run_start.is_some();
    let final_mean = if last_window_mean.is_nan() { dev_t.mean() } else { last_window_mean };
    let final_phase = (phi_target + final_mean).rem_euclid(period);
    let partner_dev = wrap_phase(final_mean - period / 2.0, period);
    let locked_to = if final_mean.abs() < opts.acquisition_threshold {
        Some(target)
    } else if partner_dev.abs() < opts.acquisition_threshold {
        Some(target.partner())
    } else {
        None
    };
    let about = if locked_to == Some(target.partner()) { &dev_p } else { &dev_t };
    let nn = if nn_means.len() >= 2 {
        let m = nn_means.iter().sum::<f64>() / nn_means.len() as f64;
        let v = nn_means.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (nn_means.len() - 1) as f64;
        (v.sqrt(), m)
    } else {
        (f64::NAN, f64::NAN)
    };
    let error_signal_psd = match opts.psd {
        Some(p) if psd_series.len() >= p.segment => Some(welch_psd(&psd_series, fs / psd_dec as f64, p.segment, 0.5)?),
        Some(p) => {
            return Err(Error::Input(format!(
                "only {} decimated error samples for a {}-point PSD segment",
                psd_series.len(),
                p.segment
            )))
        }
        None => None,
    };

    let report = LockReport {
        target,
        acquired,
        acquisition_time: run_start.map(|k| k as f64 / fs),
        lock_point: phi_target,
        locked_to,
        final_phase,
        threshold: opts.acquisition_threshold,
        residual_mean_true: about.mean(),
        residual_rms_true: about.rms(),
        error_mean: err.mean(),
        error_rms: err.rms(),
        residual_rms_inloop: opts.slope.map(|s| err.rms() / s.abs()),
        noise_on_noise: nn.0,
        envelope_mean: nn.1,
        measured_samples: err.n,
        duration,
        sample_rate: fs,
        error_signal_psd,
        grabbed_at,
    };

    let mut trace = SimTrace::new(if dec > 0 { fs / dec as f64 } else { fs }, cfg.seed, cfg.mode.name());
    if dec > 0 {
        trace.decimation = dec;
        let channels = [
            Channel::TruePhase,
            Channel::Photocurrent,
            Channel::BpfOut,
            Channel::Envelope,
            Channel::ErrorSignal,
            Channel::Control,
        ];
        for (c, data) in channels.into_iter().zip(rec) {
            trace.push_channel(c, data)?;
        }
    }
    Ok((trace, report))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(rate: f64, limit: f64, h: f64) -> Ramp {
        Ramp::new(GrabOptions { rate, hysteresis: h }, limit, 1.0)
    }

    #[test]
    fn grabs_only_on_a_restoring_crossing_past_the_hysteresis() {
        // Signed error sin(u - 1): rising through zero at u = 1.
        let mut r = ramp(0.01, 10.0, 0.05);
        let mut grabbed = None;
        for _ in 0..1000 {
            if r.step((r.u - 1.0).sin()) {
                grabbed = Some(r.u);
                break;
            }
        }
        let u = grabbed.unwrap();
        assert!(u > 1.04 && u < 1.07, "{u}");

        // A falling crossing is ignored on a rising ramp.
        let mut r = ramp(0.01, 10.0, 0.05);
        for _ in 0..300 {
            assert!(!r.step(-(r.u - 1.0).sin()));
        }
    }

    #[test]
    fn reverses_at_the_limit_and_mirrors_the_crossing() {
        // Signed error sin(u + 0.5) rises through zero at u = -0.5, behind
        // a rising ramp that starts at 0. It is found on the way back down.
        let mut r = ramp(0.01, 1.0, 0.02);
        let mut reversed = false;
        let mut grabbed = None;
        for _ in 0..2000 {
            if r.step((r.u + 0.5).sin()) {
                grabbed = Some(r.u);
                break;
            }
            reversed |= r.step < 0.0;
        }
        assert!(reversed);
        let u = grabbed.unwrap();
        assert!(u < -0.51 && u > -0.54, "{u}");
        assert!(r.step < 0.0);
        assert!(r.u.abs() <= 1.0);
    }
}
