//! Streaming signal-chain primitives: recursive filters, band-pass,
//! envelope detector, lock-in demodulator, and Welch spectra.
//!
//! Filters are stateful and single-consumer; feed samples one at a time
//! with [`Filter::process`] or whole series with the free functions.

mod bandpass;
mod chain;
mod envelope;
mod filters;
mod lockin;
mod welch;

pub use bandpass::{bandpass, bandpass_ideal, Bandpass, BandpassConfig};
pub use chain::{ChainSample, DspChainConfig, NlChain};
pub use envelope::{envelope_detect, DetectorLaw, EnvelopeConfig, EnvelopeDetector};
pub use filters::{Biquad, Cascade, Filter};
pub use lockin::{lock_in, LockIn, LockInConfig, LpfSlope};
pub use welch::{welch_psd, Spectrum};
