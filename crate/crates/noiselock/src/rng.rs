//! Seeded noise streams.
//!
//! Every stochastic quantity in a simulation draws from its own [`NoiseStream`]:
//! a ChaCha8 block cipher keyed by the run seed and addressed by a stream id.
//! ChaCha is counter-based, so `(seed, stream, draw index)` fully determines
//! each value and independent streams never overlap.
//!
//! Gaussian deviates use the Marsaglia polar form of Box–Muller:
//!
//! ```text
//! draw u, v uniform on (-1, 1) until 0 < s = u² + v² < 1
//! z₁ = u · sqrt(-2 ln s / s),  z₂ = v · sqrt(-2 ln s / s)
//! ```
//!
//! The logarithm comes from `libm` (a pure-Rust port of musl), so the noise
//! path uses only IEEE-754 basic operations plus a fixed software `ln`. The
//! same seed therefore reproduces the same bits on every platform.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Stream ids used by the simulator. Keeping them fixed makes traces
/// reproducible across refactors of the call order.
pub mod streams {
    pub const DETECTION: u64 = 0;
    pub const DISTURBANCE: u64 = 1;
    pub const CLASSICAL: u64 = 2;
    pub const INITIAL_PHASE: u64 = 3;
}

#[derive(Clone, Debug)]
pub struct NoiseStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl NoiseStream {
    pub fn new(seed: u64, stream: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Self { rng, spare: None }
    }

    /// Uniform on [0, 1) with 53 bits of resolution.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.rng.next_u64() >> 11) as f64 * (1.0 / 9_007_199_254_740_992.0)
    }

    /// Standard normal deviate.
    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        loop {
            let u = 2.0 * self.uniform() - 1.0;
            let v = 2.0 * self.uniform() - 1.0;
            let s = u * u + v * v;
            if s > 0.0 && s < 1.0 {
                let m = (-2.0 * libm::log(s) / s).sqrt();
                self.spare = Some(v * m);
                return u * m;
            }
        }
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for x in out {
            *x = self.gaussian();
        }
    }
}
