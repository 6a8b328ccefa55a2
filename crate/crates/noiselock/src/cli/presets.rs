//! Named configurations for the standard experiments.

use std::f64::consts::PI;

use super::config::{DisturbanceKind, Experiment, ExperimentConfig, PlantMode};
use crate::analytic::LockPoint;
use crate::dsp::{DetectorLaw, LpfSlope};
use crate::plant::{Port, Quadrature, SqueezedStateSpec};

pub const PRESETS: [(&str, &str); 8] = [
    ("fig2", "noise variance and error signal of an 11 dB phase-squeezed beam vs homodyne angle"),
    ("fig3", "stability of the squeezed and anti-squeezed lock points vs squeeze factor and loss"),
    ("fig4", "coherent fringe lock acquisition, loop closed 0.4 s into the trace"),
    ("fig6", "noise locking vs coherent modulation locking error-point spectra on both fringes"),
    ("fig8", "in-loop error spectra with a squeezed vacuum locked to either quadrature"),
    ("analyzer", "squeezed lock using a spectrum-analyzer band (RBW) as the envelope detector"),
    ("bandwidth", "Monte Carlo stability vs detection bandwidth over a 16x range"),
    ("loss", "Monte Carlo stability of both lock points vs detection loss"),
];

pub fn preset_names() -> impl Iterator<Item = &'static str> {
    PRESETS.iter().map(|(n, _)| *n)
}

/// Coherent Mach–Zehnder: 100 kHz dither at 0.045 rad, 2–20 MHz band-pass,
/// 200 kHz envelope detector, 10 ms 6 dB/octave lock-in.
fn coherent_base() -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.plant.mode = PlantMode::Coherent;
    c.plant.visibility = 0.6;
    c.plant.port = Port::D;
    c.modulation.frequency = 100e3;
    c.modulation.depth = 0.045;
    c.bandpass.f_low = 2e6;
    c.bandpass.f_high = 20e6;
    c.envelope.cutoff = 200e3;
    c.lockin.time_constant = 10e-3;
    c.lockin.slope = LpfSlope::Db6;
    c.servo.lock_point = LockPoint::DarkFringe;
    c
}

pub fn preset(name: &str) -> Option<ExperimentConfig> {
    let mut c = ExperimentConfig::default();
    match name {
        "fig2" => {
            c.experiment = Experiment::SweepTheta;
            c.plant.squeeze_factor = SqueezedStateSpec::squeeze_factor_for_db(11.0);
            c.plant.squeezed_quadrature = Quadrature::Phase;
            c.sweep.points = 24;
            c.sweep.theta_end = 2.0 * PI;
            c.tolerances.zero_crossing = 0.01;
        }
        "fig3" => {
            c.experiment = Experiment::StabilityVsR;
            c.stability.squeeze_factors.clear();
            c.stability.losses = vec![0.0, 0.1, 0.5];
        }
        "fig4" => {
            c = coherent_base();
            c.experiment = Experiment::LockAcquire;
            c.modulation.theta0 = 0.5;
            c.disturbance.kind = DisturbanceKind::RandomWalk;
            c.disturbance.diffusion = 0.1;
            c.servo.ugf = 5.0;
            c.servo.engage_at = 0.4;
            c.run.duration = 1.0;
            c.run.settle = 0.8;
            c.run.record_rate = 10e3;
        }
        "fig6" => {
            c = coherent_base();
            c.experiment = Experiment::CoherentVsCml;
            c.envelope.law = DetectorLaw::Amplitude;
            c.lockin.time_constant = 100e-6;
            c.run.duration = 0.2;
            c.run.settle = 0.01;
        }
        "fig8" => {
            c.experiment = Experiment::SpectrumInloop;
            c.run.duration = 0.4;
            c.run.settle = 0.02;
        }
        "analyzer" => {
            c.experiment = Experiment::LockAcquire;
            c.modulation.frequency = 20e3;
            c.bandpass.f_low = 1.85e6;
            c.bandpass.f_high = 2.15e6;
            c.envelope.cutoff = 30e3;
            c.envelope.law = DetectorLaw::Amplitude;
            c.modulation.theta0 = 0.6;
            c.servo.engage_at = 0.005;
            c.run.duration = 0.05;
            c.run.settle = 0.02;
            c.run.record_rate = 100e3;
        }
        "bandwidth" => {
            c.experiment = Experiment::StabilityVsBandwidth;
            c.bandpass.f_low = 625e3;
            c.bandpass.f_high = 2.5e6;
            c.stability.bandwidth_factors = vec![1.0, 4.0, 16.0];
            c.stability.seeds = 10;
            c.run.duration = 0.025;
            c.run.settle = 0.005;
        }
        "loss" => {
            c.experiment = Experiment::StabilityVsLoss;
            c.stability.losses = vec![0.0, 0.1, 0.5];
            c.stability.seeds = 10;
            c.run.duration = 0.025;
            c.run.settle = 0.005;
        }
        _ => return None,
    }
    Some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::parse_config;

    #[test]
    fn every_preset_validates_and_round_trips() {
        for name in preset_names() {
            let c = preset(name).unwrap();
            c.validate().unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(parse_config(&c.emit()).unwrap(), c, "{name}");
        }
        assert!(preset("fig5").is_none());
    }

    #[test]
    fn fig8_file_matches_caption_settings() {
        let text = preset("fig8").unwrap().emit();
        let c = parse_config(&text).unwrap();
        let chain = c.chain().unwrap();
        assert!((chain.lockin.ref_freq - 19.7e3 * 0.01).abs() < 1e-9);
        assert!((chain.bandpass.f_low - 1e6 * 0.01).abs() < 1e-9);
        assert!((chain.bandpass.f_high - 30e6 * 0.01).abs() < 1e-6);
        assert!((chain.lockin.lpf_time_constant - 100e-6 / 0.01).abs() < 1e-12);
        assert_eq!(chain.lockin.lpf_slope.db_per_octave(), 12);
    }

    #[test]
    fn fig2_squeezing_is_eleven_db() {
        let c = preset("fig2").unwrap();
        let v_min = (-2.0 * c.plant.squeeze_factor).exp();
        assert!((v_min - 10f64.powf(-1.1)).abs() < 1e-12);
    }
}
