use std::f64::consts::{FRAC_PI_2, PI};

use noiselock::analytic::LockPoint;
use noiselock::cli::config::DisturbanceKind;
use noiselock::cli::{evaluate, Experiment, ExperimentConfig};

fn acquire(theta0: f64, point: LockPoint, seed: u64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.experiment = Experiment::LockAcquire;
    c.seed = seed;
    c.modulation.theta0 = theta0;
    c.servo.lock_point = point;
    c.disturbance.kind = DisturbanceKind::RandomWalk;
    c.disturbance.diffusion = 1.0;
    c.run.duration = 0.03;
    c.run.settle = 0.015;
    c.run.record_rate = 0.0;
    c.validate().unwrap();
    c
}

// Distance between two angles modulo pi.
fn off(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(PI);
    d.min(PI - d)
}

// The default state squeezes the amplitude quadrature, whose variance
// minimum sits at a homodyne angle of pi/2.
#[test]
fn pulls_in_to_the_squeezed_quadrature_from_an_offset() {
    let out = evaluate(&acquire(FRAC_PI_2 - 0.6, LockPoint::Squeezed, 3)).unwrap();
    let s = &out.summary;
    assert!(s.passed(), "{}", s.to_text());
    assert!(s.get("residual_mean_true").unwrap().abs() < 0.05, "{}", s.to_text());
    assert!(off(s.get("lock_phase").unwrap(), FRAC_PI_2) < 1e-12);
    assert!(off(s.get("final_phase").unwrap(), FRAC_PI_2) < 0.1, "{}", s.to_text());
}

#[test]
fn demodulation_phase_pi_holds_the_anti_squeezed_quadrature() {
    let out = evaluate(&acquire(0.9, LockPoint::AntiSqueezed, 4)).unwrap();
    let s = &out.summary;
    assert!(s.passed(), "{}", s.to_text());
    assert!(off(s.get("lock_phase").unwrap(), 0.0) < 1e-12);
    assert!(off(s.get("final_phase").unwrap(), 0.0) < 0.1, "{}", s.to_text());
}

#[test]
fn same_seed_reproduces_the_run_exactly() {
    let a = evaluate(&acquire(1.0, LockPoint::Squeezed, 9)).unwrap();
    let b = evaluate(&acquire(1.0, LockPoint::Squeezed, 9)).unwrap();
    assert_eq!(a.summary.to_text(), b.summary.to_text());
    let c = evaluate(&acquire(1.0, LockPoint::Squeezed, 10)).unwrap();
    assert_ne!(
        a.summary.get("residual_rms_true"),
        c.summary.get("residual_rms_true")
    );
}

#[test]
fn ramp_and_grab_leaves_the_partner_extremum() {
    // Starting on the anti-squeezed quadrature the error is zero with the
    // wrong slope; the ramp has to carry the phase to the squeezed one.
    let mut c = acquire(0.0, LockPoint::Squeezed, 5);
    c.disturbance.kind = DisturbanceKind::None;
    c.servo.grab_rate = 50.0;
    c.run.duration = 0.08;
    c.run.settle = 0.06;
    c.validate().unwrap();
    let out = evaluate(&c).unwrap();
    let s = &out.summary;
    assert!(s.passed(), "{}", s.to_text());
    let grabbed = s.get("grabbed_at_lab_s").expect("ramp never handed over");
    assert!(grabbed > 0.0 && grabbed < 0.06, "{grabbed}");
    assert!(off(s.get("final_phase").unwrap(), FRAC_PI_2) < 0.1, "{}", s.to_text());
}
