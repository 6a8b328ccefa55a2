//! Idealized coherent modulation locking: demodulate the detected mean
//! power directly at the dither frequency.

use crate::analytic::bessel_j0_j1;
use crate::dsp::{Filter, LockIn, LockInConfig, LpfSlope};
use crate::error::{Error, Result};
use crate::plant::{CoherentPairSpec, ModulationSpec};
use crate::timeseries::{Channel, SimTrace};

/// Streaming CML readout. The photocurrent is divided by `sqrt(flux)` so the
/// output is in fringe-power units: `±2 J₁(θ₁) ā b̄ cos θ₀` (plus for port D).
#[derive(Clone, Debug)]
pub struct CmlReadout {
    lockin: LockIn,
    inv_sqrt_flux: f64,
}

impl CmlReadout {
    pub fn new(
        pair: &CoherentPairSpec,
        modulation: &ModulationSpec,
        time_constant: f64,
        slope: LpfSlope,
        fs: f64,
    ) -> Result<Self> {
        let mut cfg = LockInConfig::new(modulation.freq, time_constant, slope);
        cfg.ref_phase = modulation.demod_phase;
        Ok(Self {
            lockin: LockIn::new(cfg, fs)?,
            inv_sqrt_flux: 1.0 / pair.photon_flux().sqrt(),
        })
    }

    #[inline]
    pub fn step(&mut self, photocurrent: f64) -> f64 {
        self.lockin.process(photocurrent * self.inv_sqrt_flux)
    }
}

/// Magnitude of the CML error slope at a fringe, `2 J₁(θ₁) ā b̄`.
pub fn cml_slope(pair: &CoherentPairSpec, depth: f64) -> f64 {
    2.0 * bessel_j0_j1(depth).1 * pair.amp_a() * pair.amp_b()
}

/// CML error signal for a recorded coherent-mode trace, with a 6 dB/octave
/// output filter of time constant `time_constant`.
pub fn cml_readout(
    trace: &SimTrace,
    pair: &CoherentPairSpec,
    modulation: &ModulationSpec,
    time_constant: f64,
) -> Result<Vec<f64>> {
    if trace.source != "coherent" {
        return Err(Error::Mode(format!(
            "CML needs a coherent carrier; trace source is {}",
            trace.source
        )));
    }
    if trace.decimation != 1 {
        return Err(Error::Input("CML readout needs a full-rate photocurrent".into()));
    }
    let pc = trace
        .channel(Channel::Photocurrent)
        .ok_or_else(|| Error::Input("trace has no photocurrent channel".into()))?;
    let mut r = CmlReadout::new(pair, modulation, time_constant, LpfSlope::Db6, trace.sample_rate)?;
    Ok(pc.iter().map(|&x| r.step(x)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::{DisturbanceSpec, Port, Quadrature, SqueezedStateSpec};
    use crate::timeseries::{synthesize, Feedback, SourceMode, SynthesisConfig};
    use std::f64::consts::PI;

    fn trace(theta0: f64, visibility: f64) -> (SimTrace, CoherentPairSpec, ModulationSpec) {
        let pair = CoherentPairSpec::from_visibility(visibility, 1.0).unwrap();
        let modulation = ModulationSpec::new(theta0, 0.045, 1e3, 0.0).unwrap();
        let cfg = SynthesisConfig {
            mode: SourceMode::Coherent { pair, port: Port::D },
            modulation,
            disturbance: DisturbanceSpec::None,
            fs: 1e5,
            duration: 2.0,
            seed: 3,
            classical: None,
        };
        (synthesize(&cfg, Feedback::Open).unwrap(), pair, modulation)
    }

    fn tail_mean(x: &[f64]) -> f64 {
        let t = &x[x.len() / 2..];
        t.iter().sum::<f64>() / t.len() as f64
    }

    #[test]
    fn quadrature_point_reads_zero_and_fringe_slope_matches() {
        let (t, pair, m) = trace(PI / 2.0, 0.6);
        let e = cml_readout(&t, &pair, &m, 0.05).unwrap();
        assert!(tail_mean(&e).abs() < 0.01 * cml_slope(&pair, 0.045));
        let (t, pair, m) = trace(0.0, 0.6);
        let e = cml_readout(&t, &pair, &m, 0.05).unwrap();
        assert!((tail_mean(&e) / cml_slope(&pair, 0.045) - 1.0).abs() < 0.02);
    }

    #[test]
    fn zero_visibility_gives_no_signal() {
        let (t, pair, m) = trace(0.0, 0.0);
        let e = cml_readout(&t, &pair, &m, 0.05).unwrap();
        assert!(tail_mean(&e).abs() < 1e-3);
        assert_eq!(cml_slope(&pair, 0.045), 0.0);
    }

    #[test]
    fn rejects_homodyne_traces() {
        let cfg = SynthesisConfig {
            mode: SourceMode::HomodyneSqueezed(SqueezedStateSpec::new(0.4, Quadrature::Amplitude, 0.0).unwrap()),
            modulation: ModulationSpec::new(0.0, 0.1, 1e3, 0.0).unwrap(),
            disturbance: DisturbanceSpec::None,
            fs: 1e5,
            duration: 0.01,
            seed: 1,
            classical: None,
        };
        let t = synthesize(&cfg, Feedback::Open).unwrap();
        let pair = CoherentPairSpec::new(0.5, 0.5).unwrap();
        assert!(matches!(cml_readout(&t, &pair, &cfg.modulation, 0.05), Err(Error::Mode(_))));
    }
}
