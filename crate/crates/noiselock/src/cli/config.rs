//! Experiment configuration and its text format.
//!
//! The format is line oriented: `key = value` pairs, `[section]` headers,
//! `#` comments, blank lines ignored. Keys before the first header belong to
//! the top level. Lists are comma separated and may be empty. Every value is
//! in laboratory units (Hz, seconds, photons per second); `scale_factor`
//! multiplies frequencies and divides times when a run is built, so a
//! 100 MHz detection chain becomes a 1 MHz simulation at the default 0.01.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::fmt::Write as _;

use sha2::{Digest, Sha256};

use crate::analytic::LockPoint;
use crate::dsp::{BandpassConfig, DetectorLaw, DspChainConfig, EnvelopeConfig, LockInConfig, LpfSlope};
use crate::error::{Error, Result};
use crate::feedback::lock_phase;
use crate::plant::{CoherentPairSpec, DisturbanceSpec, ModulationSpec, Port, Quadrature, SqueezedStateSpec};
use crate::timeseries::{ClassicalNoiseSpec, SourceMode, SynthesisConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    SweepTheta,
    LockAcquire,
    StabilityVsR,
    StabilityVsBandwidth,
    StabilityVsLoss,
    SpectrumInloop,
    CoherentVsCml,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::SweepTheta,
        Experiment::LockAcquire,
        Experiment::StabilityVsR,
        Experiment::StabilityVsBandwidth,
        Experiment::StabilityVsLoss,
        Experiment::SpectrumInloop,
        Experiment::CoherentVsCml,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::SweepTheta => "sweep_theta",
            Experiment::LockAcquire => "lock_acquire",
            Experiment::StabilityVsR => "stability_vs_R",
            Experiment::StabilityVsBandwidth => "stability_vs_bandwidth",
            Experiment::StabilityVsLoss => "stability_vs_loss",
            Experiment::SpectrumInloop => "spectrum_inloop",
            Experiment::CoherentVsCml => "coherent_vs_cml",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PlantMode {
    HomodyneSqueezed,
    Coherent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DisturbanceKind {
    None,
    Sinusoid,
    RandomWalk,
    Drift,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlantConfig {
    pub mode: PlantMode,
    pub squeeze_factor: f64,
    pub squeezed_quadrature: Quadrature,
    pub loss_lambda: f64,
    pub visibility: f64,
    pub total_power: f64,
    /// Photons per second per unit fringe power.
    pub photon_flux: f64,
    pub port: Port,
    /// One-sided classical noise PSD at `classical_corner`, SNL units; 0 disables.
    pub classical_level: f64,
    pub classical_corner: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModulationConfig {
    pub theta0: f64,
    pub depth: f64,
    pub frequency: f64,
    pub demod_phase: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DisturbanceConfig {
    pub kind: DisturbanceKind,
    pub frequency: f64,
    pub amplitude: f64,
    /// rad²/s.
    pub diffusion: f64,
    /// rad/s.
    pub rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BandpassSection {
    pub f_low: f64,
    pub f_high: f64,
    pub low_rollup_order: usize,
    pub high_order: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvelopeSection {
    pub cutoff: f64,
    pub law: DetectorLaw,
    /// `None` uses the law's calibration (`π/2` amplitude, 1 power).
    pub gain: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LockinSection {
    pub time_constant: f64,
    pub slope: LpfSlope,
    /// `None` aligns the reference with the chain's dither response.
    pub ref_phase: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ServoSection {
    pub lock_point: LockPoint,
    pub ugf: f64,
    pub limit: f64,
    pub engage_at: f64,
    pub threshold: f64,
    pub acquisition_periods: usize,
    /// Ramp speed (rad/s) for ramp-and-grab acquisition; 0 engages the
    /// servo directly.
    pub grab_rate: f64,
    /// Crossing hysteresis for ramp-and-grab, in radians of error signal.
    pub grab_hysteresis: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunSection {
    pub sample_rate: f64,
    pub duration: f64,
    pub settle: f64,
    /// Rate of the recorded trace; 0 records nothing.
    pub record_rate: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSection {
    pub points: usize,
    pub theta_start: f64,
    pub theta_end: f64,
    pub point_duration: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcquireSection {
    /// 1 runs the configured `theta0`; more draws random initial phases.
    pub trials: usize,
    /// Also run every trial with the demodulation phase flipped by π.
    pub flip_check: bool,
    pub max_time: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StabilitySection {
    pub seeds: usize,
    pub squeeze_factors: Vec<f64>,
    pub losses: Vec<f64>,
    pub bandwidth_factors: Vec<f64>,
    pub r_min: f64,
    pub r_max: f64,
    pub r_points: usize,
    pub bandwidth_product: f64,
    pub slope_duration: f64,
    pub slope_delta: f64,
    pub nn_periods: usize,
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpectrumSection {
    pub decimation: usize,
    pub segment: usize,
    pub band_low: f64,
    pub band_high: f64,
}

/// Bounds used for the summary verdicts.
#[derive(Clone, Debug, PartialEq)]
pub struct Tolerances {
    pub zero_crossing: f64,
    pub fit_residual: f64,
    pub null_sigma: f64,
    pub stability_ratio: f64,
    pub bandwidth_slope: f64,
    pub fringe_ratio_db: f64,
    pub nl_cml_excess_db: f64,
    pub acquisition_fraction: f64,
    pub plateau_db: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub scale_factor: f64,
    pub output_dir: String,
    pub plant: PlantConfig,
    pub modulation: ModulationConfig,
    pub disturbance: DisturbanceConfig,
    pub bandpass: BandpassSection,
    pub envelope: EnvelopeSection,
    pub lockin: LockinSection,
    pub servo: ServoSection,
    pub run: RunSection,
    pub sweep: SweepSection,
    pub acquire: AcquireSection,
    pub stability: StabilitySection,
    pub spectrum: SpectrumSection,
    pub tolerances: Tolerances,
}

impl Default for ExperimentConfig {
    /// Squeezed-vacuum homodyne at R = 0.41 with the 19.7 kHz dither,
    /// 1–30 MHz band-pass and 100 µs, 12 dB/octave lock-in.
    fn default() -> Self {
        Self {
            experiment: Experiment::SweepTheta,
            seed: 1,
            scale_factor: 0.01,
            output_dir: "noiselock-out".into(),
            plant: PlantConfig {
                mode: PlantMode::HomodyneSqueezed,
                squeeze_factor: 0.41,
                squeezed_quadrature: Quadrature::Amplitude,
                loss_lambda: 0.0,
                visibility: 0.6,
                total_power: 1.0,
                photon_flux: 1e11,
                port: Port::D,
                classical_level: 0.0,
                classical_corner: 5e6,
            },
            modulation: ModulationConfig {
                theta0: 0.0,
                depth: 0.1,
                frequency: 19.7e3,
                demod_phase: 0.0,
            },
            disturbance: DisturbanceConfig {
                kind: DisturbanceKind::None,
                frequency: 0.0,
                amplitude: 0.0,
                diffusion: 0.0,
                rate: 0.0,
            },
            bandpass: BandpassSection {
                f_low: 1e6,
                f_high: 30e6,
                low_rollup_order: 3,
                high_order: 4,
            },
            envelope: EnvelopeSection {
                cutoff: 100e3,
                law: DetectorLaw::Power,
                gain: None,
            },
            lockin: LockinSection {
                time_constant: 100e-6,
                slope: LpfSlope::Db12,
                ref_phase: None,
            },
            servo: ServoSection {
                lock_point: LockPoint::Squeezed,
                ugf: 400.0,
                limit: 20.0,
                engage_at: 0.0,
                threshold: 0.1,
                acquisition_periods: 10,
                grab_rate: 0.0,
                grab_hysteresis: 0.02,
            },
            run: RunSection {
                sample_rate: 100e6,
                duration: 0.05,
                settle: 0.01,
                record_rate: 0.0,
            },
            sweep: SweepSection {
                points: 24,
                theta_start: 0.0,
                theta_end: 2.0 * PI,
                point_duration: 0.1,
            },
            acquire: AcquireSection {
                trials: 1,
                flip_check: false,
                max_time: 0.5,
            },
            stability: StabilitySection {
                seeds: 20,
                squeeze_factors: vec![0.41],
                losses: vec![0.0, 0.1, 0.5],
                bandwidth_factors: vec![1.0, 4.0, 16.0],
                r_min: 0.05,
                r_max: 2.0,
                r_points: 40,
                bandwidth_product: 2.0,
                slope_duration: 0.02,
                slope_delta: 0.25,
                nn_periods: 2,
                threshold: 0.3,
            },
            spectrum: SpectrumSection {
                decimation: 1000,
                segment: 4096,
                band_low: 100.0,
                band_high: 500.0,
            },
            tolerances: Tolerances {
                zero_crossing: 0.02,
                fit_residual: 0.05,
                null_sigma: 3.0,
                stability_ratio: 0.2,
                bandwidth_slope: 0.05,
                fringe_ratio_db: 1.5,
                nl_cml_excess_db: 20.0,
                acquisition_fraction: 0.95,
                plateau_db: 6.0,
            },
        }
    }
}

trait Field {
    fn set(&mut self, s: &str) -> std::result::Result<(), String>;
    fn get(&self) -> String;
}

impl Field for f64 {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        let v: f64 = s.parse().map_err(|_| format!("expected a number, got `{s}`"))?;
        if !v.is_finite() {
            return Err(format!("expected a finite number, got `{s}`"));
        }
        *self = v;
        Ok(())
    }
    fn get(&self) -> String {
        format!("{self:?}")
    }
}

impl Field for u64 {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`"))?;
        Ok(())
    }
    fn get(&self) -> String {
        self.to_string()
    }
}

impl Field for usize {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = s.parse().map_err(|_| format!("expected a non-negative integer, got `{s}`"))?;
        Ok(())
    }
    fn get(&self) -> String {
        self.to_string()
    }
}

impl Field for bool {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        *self = match s {
            "true" => true,
            "false" => false,
            _ => return Err(format!("expected true or false, got `{s}`")),
        };
        Ok(())
    }
    fn get(&self) -> String {
        self.to_string()
    }
}

impl Field for String {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        if s.is_empty() {
            return Err("expected a non-empty string".into());
        }
        *self = s.to_string();
        Ok(())
    }
    fn get(&self) -> String {
        self.clone()
    }
}

impl Field for Vec<f64> {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        let mut out = Vec::new();
        for item in s.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            let mut v = 0.0;
            v.set(item)?;
            out.push(v);
        }
        *self = out;
        Ok(())
    }
    fn get(&self) -> String {
        self.iter().map(|v| format!("{v:?}")).collect::<Vec<_>>().join(", ")
    }
}

/// A number, or `auto`.
impl Field for Option<f64> {
    fn set(&mut self, s: &str) -> std::result::Result<(), String> {
        if s == "auto" {
            *self = None;
            return Ok(());
        }
        let mut v = 0.0;
        v.set(s).map_err(|_| format!("expected a number or `auto`, got `{s}`"))?;
        *self = Some(v);
        Ok(())
    }
    fn get(&self) -> String {
        self.map_or_else(|| "auto".into(), |v| format!("{v:?}"))
    }
}

macro_rules! keyword_field {
    ($ty:ty, $($variant:expr => $name:literal),+ $(,)?) => {
        impl Field for $ty {
            fn set(&mut self, s: &str) -> std::result::Result<(), String> {
                *self = match s {
                    $($name => $variant,)+
                    _ => return Err(format!(
                        "expected one of {}, got `{s}`",
                        [$($name),+].join(", ")
                    )),
                };
                Ok(())
            }
            fn get(&self) -> String {
                $(if *self == $variant { return $name.into(); })+
                unreachable!()
            }
        }
    };
}

keyword_field!(Experiment,
    Experiment::SweepTheta => "sweep_theta",
    Experiment::LockAcquire => "lock_acquire",
    Experiment::StabilityVsR => "stability_vs_R",
    Experiment::StabilityVsBandwidth => "stability_vs_bandwidth",
    Experiment::StabilityVsLoss => "stability_vs_loss",
    Experiment::SpectrumInloop => "spectrum_inloop",
    Experiment::CoherentVsCml => "coherent_vs_cml",
);
keyword_field!(PlantMode, PlantMode::HomodyneSqueezed => "homodyne_squeezed", PlantMode::Coherent => "coherent");
keyword_field!(Quadrature, Quadrature::Amplitude => "amplitude", Quadrature::Phase => "phase");
keyword_field!(Port, Port::C => "C", Port::D => "D");
keyword_field!(DisturbanceKind,
    DisturbanceKind::None => "none",
    DisturbanceKind::Sinusoid => "sinusoid",
    DisturbanceKind::RandomWalk => "random_walk",
    DisturbanceKind::Drift => "drift",
);
keyword_field!(DetectorLaw, DetectorLaw::Amplitude => "amplitude", DetectorLaw::Power => "power");
keyword_field!(LpfSlope, LpfSlope::Db6 => "6", LpfSlope::Db12 => "12");
keyword_field!(LockPoint,
    LockPoint::Squeezed => "squeezed",
    LockPoint::AntiSqueezed => "anti_squeezed",
    LockPoint::DarkFringe => "dark_fringe",
    LockPoint::BrightFringe => "bright_fringe",
);

type Entry<'a> = (&'static str, &'static str, &'a mut dyn Field);

impl ExperimentConfig {
    /// Every key of the format, in emission order.
    fn fields(&mut self) -> Vec<Entry<'_>> {
        let p = &mut self.plant;
        let m = &mut self.modulation;
        let d = &mut self.disturbance;
        let b = &mut self.bandpass;
        let e = &mut self.envelope;
        let l = &mut self.lockin;
        let s = &mut self.servo;
        let r = &mut self.run;
        let w = &mut self.sweep;
        let a = &mut self.acquire;
        let st = &mut self.stability;
        let sp = &mut self.spectrum;
        let t = &mut self.tolerances;
        vec![
            ("", "experiment", &mut self.experiment),
            ("", "seed", &mut self.seed),
            ("", "scale_factor", &mut self.scale_factor),
            ("", "output_dir", &mut self.output_dir),
            ("plant", "mode", &mut p.mode),
            ("plant", "squeeze_factor", &mut p.squeeze_factor),
            ("plant", "squeezed_quadrature", &mut p.squeezed_quadrature),
            ("plant", "loss_lambda", &mut p.loss_lambda),
            ("plant", "visibility", &mut p.visibility),
            ("plant", "total_power", &mut p.total_power),
            ("plant", "photon_flux", &mut p.photon_flux),
            ("plant", "port", &mut p.port),
            ("plant", "classical_level", &mut p.classical_level),
            ("plant", "classical_corner", &mut p.classical_corner),
            ("modulation", "theta0", &mut m.theta0),
            ("modulation", "depth", &mut m.depth),
            ("modulation", "frequency", &mut m.frequency),
            ("modulation", "demod_phase", &mut m.demod_phase),
            ("disturbance", "kind", &mut d.kind),
            ("disturbance", "frequency", &mut d.frequency),
            ("disturbance", "amplitude", &mut d.amplitude),
            ("disturbance", "diffusion", &mut d.diffusion),
            ("disturbance", "rate", &mut d.rate),
            ("bandpass", "f_low", &mut b.f_low),
            ("bandpass", "f_high", &mut b.f_high),
            ("bandpass", "low_rollup_order", &mut b.low_rollup_order),
            ("bandpass", "high_order", &mut b.high_order),
            ("envelope", "cutoff", &mut e.cutoff),
            ("envelope", "law", &mut e.law),
            ("envelope", "gain", &mut e.gain),
            ("lockin", "time_constant", &mut l.time_constant),
            ("lockin", "slope_db", &mut l.slope),
            ("lockin", "ref_phase", &mut l.ref_phase),
            ("servo", "lock_point", &mut s.lock_point),
            ("servo", "ugf", &mut s.ugf),
            ("servo", "limit", &mut s.limit),
            ("servo", "engage_at", &mut s.engage_at),
            ("servo", "threshold", &mut s.threshold),
            ("servo", "acquisition_periods", &mut s.acquisition_periods),
            ("servo", "grab_rate", &mut s.grab_rate),
            ("servo", "grab_hysteresis", &mut s.grab_hysteresis),
            ("run", "sample_rate", &mut r.sample_rate),
            ("run", "duration", &mut r.duration),
            ("run", "settle", &mut r.settle),
            ("run", "record_rate", &mut r.record_rate),
            ("sweep", "points", &mut w.points),
            ("sweep", "theta_start", &mut w.theta_start),
            ("sweep", "theta_end", &mut w.theta_end),
            ("sweep", "point_duration", &mut w.point_duration),
            ("acquire", "trials", &mut a.trials),
            ("acquire", "flip_check", &mut a.flip_check),
            ("acquire", "max_time", &mut a.max_time),
            ("stability", "seeds", &mut st.seeds),
            ("stability", "squeeze_factors", &mut st.squeeze_factors),
            ("stability", "losses", &mut st.losses),
            ("stability", "bandwidth_factors", &mut st.bandwidth_factors),
            ("stability", "r_min", &mut st.r_min),
            ("stability", "r_max", &mut st.r_max),
            ("stability", "r_points", &mut st.r_points),
            ("stability", "bandwidth_product", &mut st.bandwidth_product),
            ("stability", "slope_duration", &mut st.slope_duration),
            ("stability", "slope_delta", &mut st.slope_delta),
            ("stability", "nn_periods", &mut st.nn_periods),
            ("stability", "threshold", &mut st.threshold),
            ("spectrum", "decimation", &mut sp.decimation),
            ("spectrum", "segment", &mut sp.segment),
            ("spectrum", "band_low", &mut sp.band_low),
            ("spectrum", "band_high", &mut sp.band_high),
            ("tolerances", "zero_crossing", &mut t.zero_crossing),
            ("tolerances", "fit_residual", &mut t.fit_residual),
            ("tolerances", "null_sigma", &mut t.null_sigma),
            ("tolerances", "stability_ratio", &mut t.stability_ratio),
            ("tolerances", "bandwidth_slope", &mut t.bandwidth_slope),
            ("tolerances", "fringe_ratio_db", &mut t.fringe_ratio_db),
            ("tolerances", "nl_cml_excess_db", &mut t.nl_cml_excess_db),
            ("tolerances", "acquisition_fraction", &mut t.acquisition_fraction),
            ("tolerances", "plateau_db", &mut t.plateau_db),
        ]
    }

    /// Checks every value against its documented range. The error names the
    /// offending key as `section.key`.
    pub fn validate(&self) -> Result<()> {
        fn positive(field: &'static str, v: f64) -> Result<()> {
            if v > 0.0 {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be > 0, got {v}")))
            }
        }
        fn non_negative(field: &'static str, v: f64) -> Result<()> {
            if v >= 0.0 {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be >= 0, got {v}")))
            }
        }
        fn at_least(field: &'static str, v: usize, min: usize) -> Result<()> {
            if v >= min {
                Ok(())
            } else {
                Err(Error::param(field, format!("must be >= {min}, got {v}")))
            }
        }

        if !(self.scale_factor > 0.0 && self.scale_factor <= 1.0) {
            return Err(Error::param(
                "scale_factor",
                format!("must lie in (0, 1], got {}", self.scale_factor),
            ));
        }
        let p = &self.plant;
        non_negative("plant.squeeze_factor", p.squeeze_factor)?;
        if !(0.0..1.0).contains(&p.loss_lambda) {
            return Err(Error::param(
                "plant.loss_lambda",
                format!("must lie in [0, 1), got {}", p.loss_lambda),
            ));
        }
        if !(0.0..=1.0).contains(&p.visibility) {
            return Err(Error::param(
                "plant.visibility",
                format!("must lie in [0, 1], got {}", p.visibility),
            ));
        }
        positive("plant.total_power", p.total_power)?;
        positive("plant.photon_flux", p.photon_flux)?;
        non_negative("plant.classical_level", p.classical_level)?;
        positive("plant.classical_corner", p.classical_corner)?;

        let m = &self.modulation;
        non_negative("modulation.depth", m.depth)?;
        positive("modulation.frequency", m.frequency)?;

        let d = &self.disturbance;
        non_negative("disturbance.frequency", d.frequency)?;
        non_negative("disturbance.diffusion", d.diffusion)?;

        let b = &self.bandpass;
        positive("bandpass.f_low", b.f_low)?;
        if b.f_high <= b.f_low {
            return Err(Error::param(
                "bandpass.f_high",
                format!("must exceed f_low = {}, got {}", b.f_low, b.f_high),
            ));
        }
        at_least("bandpass.low_rollup_order", b.low_rollup_order, 1)?;
        at_least("bandpass.high_order", b.high_order, 1)?;
        positive("envelope.cutoff", self.envelope.cutoff)?;
        if let Some(g) = self.envelope.gain {
            positive("envelope.gain", g)?;
        }
        positive("lockin.time_constant", self.lockin.time_constant)?;

        let s = &self.servo;
        positive("servo.ugf", s.ugf)?;
        positive("servo.limit", s.limit)?;
        non_negative("servo.engage_at", s.engage_at)?;
        positive("servo.threshold", s.threshold)?;
        at_least("servo.acquisition_periods", s.acquisition_periods, 1)?;
        non_negative("servo.grab_rate", s.grab_rate)?;
        non_negative("servo.grab_hysteresis", s.grab_hysteresis)?;

        let r = &self.run;
        positive("run.sample_rate", r.sample_rate)?;
        positive("run.duration", r.duration)?;
        non_negative("run.settle", r.settle)?;
        if r.settle >= r.duration {
            return Err(Error::param(
                "run.settle",
                format!("must be shorter than run.duration = {}, got {}", r.duration, r.settle),
            ));
        }
        non_negative("run.record_rate", r.record_rate)?;
        if r.record_rate > r.sample_rate {
            return Err(Error::param(
                "run.record_rate",
                format!("must not exceed run.sample_rate = {}", r.sample_rate),
            ));
        }

        let w = &self.sweep;
        at_least("sweep.points", w.points, 4)?;
        if w.theta_end <= w.theta_start {
            return Err(Error::param("sweep.theta_end", "must exceed theta_start"));
        }
        positive("sweep.point_duration", w.point_duration)?;

        at_least("acquire.trials", self.acquire.trials, 1)?;
        positive("acquire.max_time", self.acquire.max_time)?;

        let st = &self.stability;
        at_least("stability.seeds", st.seeds, 10)?;
        if st.squeeze_factors.iter().any(|&r| r <= 0.0) {
            return Err(Error::param("stability.squeeze_factors", "entries must be > 0"));
        }
        if st.losses.iter().any(|l| !(0.0..1.0).contains(l)) {
            return Err(Error::param("stability.losses", "entries must lie in [0, 1)"));
        }
        if st.bandwidth_factors.iter().any(|&f| f <= 0.0) {
            return Err(Error::param("stability.bandwidth_factors", "entries must be > 0"));
        }
        positive("stability.r_min", st.r_min)?;
        if st.r_max <= st.r_min {
            return Err(Error::param("stability.r_max", "must exceed r_min"));
        }
        at_least("stability.r_points", st.r_points, 2)?;
        positive("stability.bandwidth_product", st.bandwidth_product)?;
        positive("stability.slope_duration", st.slope_duration)?;
        if !(st.slope_delta > 0.0 && st.slope_delta < 0.5) {
            return Err(Error::param("stability.slope_delta", "must lie in (0, 0.5)"));
        }
        at_least("stability.nn_periods", st.nn_periods, 1)?;
        positive("stability.threshold", st.threshold)?;

        let sp = &self.spectrum;
        at_least("spectrum.decimation", sp.decimation, 1)?;
        at_least("spectrum.segment", sp.segment, 16)?;
        positive("spectrum.band_low", sp.band_low)?;
        if sp.band_high <= sp.band_low {
            return Err(Error::param("spectrum.band_high", "must exceed band_low"));
        }

        let t = &self.tolerances;
        positive("tolerances.zero_crossing", t.zero_crossing)?;
        positive("tolerances.fit_residual", t.fit_residual)?;
        positive("tolerances.null_sigma", t.null_sigma)?;
        positive("tolerances.stability_ratio", t.stability_ratio)?;
        positive("tolerances.bandwidth_slope", t.bandwidth_slope)?;
        positive("tolerances.fringe_ratio_db", t.fringe_ratio_db)?;
        if !(0.0..=1.0).contains(&t.acquisition_fraction) {
            return Err(Error::param("tolerances.acquisition_fraction", "must lie in [0, 1]"));
        }

        // Build the runtime configs so cross-module preconditions surface now.
        let synth = self.synthesis()?;
        if lock_phase(&synth.mode, s.lock_point).is_err() {
            return Err(Error::param(
                "servo.lock_point",
                format!("{} is not a lock point of {} mode", s.lock_point.name(), synth.mode.name()),
            ));
        }
        let chain = self.chain()?;
        chain.validate(self.sample_rate())?;
        Ok(())
    }

    /// Simulation sample rate (Hz).
    pub fn sample_rate(&self) -> f64 {
        self.run.sample_rate * self.scale_factor
    }

    /// A laboratory frequency in simulation units.
    pub fn freq(&self, f: f64) -> f64 {
        f * self.scale_factor
    }

    /// A laboratory duration in simulation units.
    pub fn time(&self, t: f64) -> f64 {
        t / self.scale_factor
    }

    pub fn source_mode(&self) -> Result<SourceMode> {
        let p = &self.plant;
        Ok(match p.mode {
            PlantMode::HomodyneSqueezed => {
                SourceMode::HomodyneSqueezed(SqueezedStateSpec::new(p.squeeze_factor, p.squeezed_quadrature, p.loss_lambda)?)
            }
            PlantMode::Coherent => {
                let base = CoherentPairSpec::from_visibility(p.visibility, p.total_power)?;
                let pair = CoherentPairSpec::with_photon_flux(base.amp_a(), base.amp_b(), self.freq(p.photon_flux))?;
                SourceMode::Coherent { pair, port: p.port }
            }
        })
    }

    /// Open-loop synthesis settings for a `run.duration` trace.
    pub fn synthesis(&self) -> Result<SynthesisConfig> {
        let m = &self.modulation;
        let d = &self.disturbance;
        let disturbance = match d.kind {
            DisturbanceKind::None => DisturbanceSpec::None,
            DisturbanceKind::Sinusoid => DisturbanceSpec::Sinusoid {
                freq: self.freq(d.frequency),
                amplitude: d.amplitude,
            },
            DisturbanceKind::RandomWalk => DisturbanceSpec::RandomWalk {
                diffusion: self.freq(d.diffusion),
            },
            DisturbanceKind::Drift => DisturbanceSpec::ConstantDrift { rate: self.freq(d.rate) },
        };
        let classical = (self.plant.classical_level > 0.0).then(|| ClassicalNoiseSpec {
            level: self.plant.classical_level,
            corner: self.freq(self.plant.classical_corner),
        });
        let cfg = SynthesisConfig {
            mode: self.source_mode()?,
            modulation: ModulationSpec::new(m.theta0, m.depth, self.freq(m.frequency), m.demod_phase)?,
            disturbance,
            fs: self.sample_rate(),
            duration: self.time(self.run.duration),
            seed: self.seed,
            classical,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Readout chain with band-pass corners scaled by `bandwidth_factor`.
    pub fn chain_scaled(&self, bandwidth_factor: f64) -> Result<DspChainConfig> {
        let b = &self.bandpass;
        let mut bandpass = BandpassConfig::new(self.freq(b.f_low) * bandwidth_factor, self.freq(b.f_high) * bandwidth_factor);
        bandpass.low_rollup_order = b.low_rollup_order;
        bandpass.high_order = b.high_order;
        let mut envelope = match self.envelope.law {
            DetectorLaw::Amplitude => EnvelopeConfig::amplitude(self.freq(self.envelope.cutoff)),
            DetectorLaw::Power => EnvelopeConfig::power(self.freq(self.envelope.cutoff)),
        };
        if let Some(g) = self.envelope.gain {
            envelope.gain_calibration = g;
        }
        let lockin = LockInConfig::new(
            self.freq(self.modulation.frequency),
            self.time(self.lockin.time_constant),
            self.lockin.slope,
        );
        let mut chain = DspChainConfig {
            bandpass,
            envelope,
            lockin,
        };
        let fs = self.sample_rate();
        chain.validate(fs)?;
        chain.lockin.ref_phase = match self.lockin.ref_phase {
            Some(p) => p,
            None => chain.aligned_ref_phase(fs)?,
        };
        Ok(chain)
    }

    pub fn chain(&self) -> Result<DspChainConfig> {
        self.chain_scaled(1.0)
    }

    /// Canonical text: every key, fixed order, shortest round-trip floats.
    pub fn emit(&self) -> String {
        let mut copy = self.clone();
        let mut out = String::new();
        let mut section = "";
        for (sec, key, field) in copy.fields() {
            if sec != section {
                let _ = write!(out, "\n[{sec}]\n");
                section = sec;
            }
            let _ = writeln!(out, "{key} = {}", field.get());
        }
        out
    }

    /// SHA-256 of [`emit`](Self::emit), hex encoded. The output directory
    /// is left out so relocating a run does not change its identity.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir.clear();
        Sha256::digest(c.emit().as_bytes())
            .iter()
            .map(|b| format!("{b:02x}"))
            .collect()
    }
}

/// Parses the configuration format; missing keys keep their defaults.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    parse_onto(ExperimentConfig::default(), text)
}

/// Parses `text` as overrides on top of `base`.
pub fn parse_onto(base: ExperimentConfig, text: &str) -> Result<ExperimentConfig> {
    let mut cfg = base;
    let mut lines: HashMap<String, usize> = HashMap::new();
    let mut section = String::new();
    let mut known_sections: Vec<&'static str> = Vec::new();
    for (s, _, _) in cfg.fields() {
        if !known_sections.contains(&s) {
            known_sections.push(s);
        }
    }
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config {
                    line,
                    message: format!("malformed section header `{body}`"),
                })?
                .trim();
            if name.is_empty() || !known_sections.contains(&name) {
                return Err(Error::Config {
                    line,
                    message: format!("unknown section [{name}]"),
                });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = body.split_once('=').ok_or_else(|| Error::Config {
            line,
            message: format!("expected `key = value`, got `{body}`"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        let path = if section.is_empty() {
            key.to_string()
        } else {
            format!("{section}.{key}")
        };
        if let Some(prev) = lines.get(&path) {
            return Err(Error::Config {
                line,
                message: format!("duplicate key {path} (first set on line {prev})"),
            });
        }
        let mut fields = cfg.fields();
        let field = fields
            .iter_mut()
            .find(|(s, k, _)| *s == section && *k == key)
            .ok_or_else(|| Error::Config {
                line,
                message: match section.as_str() {
                    "" => format!("unknown key `{key}`"),
                    s => format!("unknown key `{key}` in [{s}]"),
                },
            })?;
        field.2.set(value).map_err(|message| Error::Config {
            line,
            message: format!("{path}: {message}"),
        })?;
        lines.insert(path, line);
    }
    cfg.validate().map_err(|e| match e {
        Error::InvalidParameter { field, reason } => match lines.get(field) {
            Some(&line) => Error::Config {
                line,
                message: format!("{field} {reason}"),
            },
            None => Error::InvalidParameter { field, reason },
        },
        other => other,
    })?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_text_gives_defaults() {
        assert_eq!(parse_config("").unwrap(), ExperimentConfig::default());
        assert_eq!(parse_config("# nothing\n\n").unwrap(), ExperimentConfig::default());
    }

    #[test]
    fn loss_out_of_range_names_field_bound_and_line() {
        let err = parse_config("seed = 4\n[plant]\nloss_lambda = 1.5\n").unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Config { line: 3, .. }), "{msg}");
        assert!(msg.contains("plant.loss_lambda"), "{msg}");
        assert!(msg.contains("[0, 1)"), "{msg}");
    }

    #[test]
    fn unknown_keys_and_sections_are_rejected() {
        let e = parse_config("[plant]\nsqueeze = 1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        let e = parse_config("\n[plnt]\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
        let e = parse_config("loss_lambda = 0.1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }));
    }

    #[test]
    fn type_errors_are_line_numbered() {
        let e = parse_config("[sweep]\n\npoints = many\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
        let e = parse_config("[lockin]\nslope_db = 18\n").unwrap_err();
        assert!(e.to_string().contains("6, 12"), "{e}");
        let e = parse_config("seed = 1\nseed = 2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }));
    }

    #[test]
    fn cross_field_errors_point_at_the_later_key() {
        let e = parse_config("[bandpass]\nf_low = 5e6\nf_high = 2e6\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 3, .. }), "{e}");
    }

    #[test]
    fn emit_parse_round_trip() {
        let mut c = ExperimentConfig::default();
        c.experiment = Experiment::CoherentVsCml;
        c.plant.mode = PlantMode::Coherent;
        c.servo.lock_point = LockPoint::BrightFringe;
        c.lockin.ref_phase = Some(-0.3);
        c.envelope.gain = Some(1.25);
        c.stability.squeeze_factors.clear();
        c.stability.losses = vec![0.0, 0.123_456_789_012_345_6];
        c.output_dir = "runs/a b".into();
        let text = c.emit();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.emit(), text);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn scaling_maps_lab_units_to_simulation_units() {
        let c = ExperimentConfig::default();
        assert_eq!(c.sample_rate(), 1e6);
        let chain = c.chain().unwrap();
        assert!((chain.lockin.ref_freq - 197.0).abs() < 1e-9);
        assert!((chain.bandpass.f_low - 1e4).abs() < 1e-9);
        assert!((chain.bandpass.f_high - 3e5).abs() < 1e-6);
        assert!((chain.lockin.lpf_time_constant - 0.01).abs() < 1e-12);
        assert_eq!(chain.lockin.lpf_slope, LpfSlope::Db12);
        let s = c.synthesis().unwrap();
        assert!((s.duration - 5.0).abs() < 1e-12);
    }

    #[test]
    fn hash_tracks_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 2;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
        let mut c = a.clone();
        c.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), c.hash());
    }

    proptest! {
        #[test]
        fn any_valid_config_round_trips(
            seed in any::<u64>(),
            r in 0.0f64..3.0,
            loss in 0.0f64..0.99,
            depth in 1e-4f64..0.5,
            theta0 in -10.0f64..10.0,
            ugf in 1.0f64..5e3,
            losses in prop::collection::vec(0.0f64..0.99, 0..5),
            ref_phase in prop::option::of(-3.0f64..3.0),
            flip in any::<bool>(),
        ) {
            let mut c = ExperimentConfig::default();
            c.seed = seed;
            c.plant.squeeze_factor = r;
            c.plant.loss_lambda = loss;
            c.modulation.depth = depth;
            c.modulation.theta0 = theta0;
            c.servo.ugf = ugf;
            c.stability.losses = losses;
            c.lockin.ref_phase = ref_phase;
            c.acquire.flip_check = flip;
            prop_assume!(c.validate().is_ok());
            let text = c.emit();
            let back = parse_config(&text).unwrap();
            prop_assert_eq!(&back, &c);
            prop_assert_eq!(back.hash(), c.hash());
        }
    }
}
