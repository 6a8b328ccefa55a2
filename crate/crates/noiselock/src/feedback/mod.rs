//! Closing the loop: servo, lock-point selection, acquisition, residual
//! phase, and an idealized coherent-modulation readout for comparison.

mod closed_loop;
mod cml;
mod servo;
mod stability;
mod sweep;

pub use closed_loop::{
    commanded_lock_point, lock_phase, GrabOptions, lock_settings, run_closed_loop, run_closed_loop_with, LockReport, LoopOptions,
    PsdOptions,
};
pub use cml::{cml_readout, cml_slope, CmlReadout};
pub use servo::{Servo, ServoConfig};
pub use stability::{measure_stability, SeedStability, Stat, StabilityEstimate, StabilityOptions};
pub use sweep::{
    error_curve, error_point, fit_single_gain, half_curvature_from_slope, harmonic_of, measure_slope, CurvePoint,
    HarmonicFit, SweepOptions,
};
