//! Seedable simulator of noise locking: deriving a phase error signal from
//! the quadrature dependence of detected noise power, for squeezed vacuum
//! on a homodyne detector and for classical two-beam fringes.
//!
//! * [`plant`]: quadrature variances, loss, fringe powers, dither and
//!   disturbance phase.
//! * [`analytic`]: closed-form error signals and lock-stability formulas.
//! * [`timeseries`]: shot-noise-normalized photocurrent synthesis.
//! * [`dsp`]: band-pass, envelope detector, lock-in, Welch PSD.
//! * [`feedback`]: servo, closed loop, sweeps, stability ensembles, and the
//!   coherent-modulation baseline.
//! * [`cli`]: experiment configs, presets and artifact output.
//! * [`selftest`]: the acceptance criteria.

pub mod analytic;
pub mod cli;
pub mod dsp;
pub mod error;
pub mod feedback;
pub mod plant;
pub mod rng;
pub mod selftest;
pub mod timeseries;

pub use error::{Error, Result};
