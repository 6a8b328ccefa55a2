//! Sample-by-sample photocurrent synthesis and trace records.
//!
//! The detector output is white Gaussian noise whose density follows the
//! plant: `i[k] = mean(θ[k]) + sqrt(V(θ[k]) · fs/2) · g[k]`. With that
//! scaling a variance `V` is also the one-sided PSD of the photocurrent, so
//! shot noise sits at exactly 1 (0 dB) regardless of the sample rate.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::plant::{
    fringe_power, homodyne_variance, quadrature_variances, CoherentPairSpec, DisturbanceSpec, ModulationSpec,
    PhaseModel, PhaseSample, Port, QuadratureVariances, SqueezedStateSpec,
};
use crate::rng::{streams, NoiseStream};

/// What the detector is looking at.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SourceMode {
    /// Squeezed vacuum on a balanced homodyne detector (zero mean).
    HomodyneSqueezed(SqueezedStateSpec),
    /// Two coherent beams; one output port is detected.
    Coherent { pair: CoherentPairSpec, port: Port },
}

impl SourceMode {
    pub fn name(&self) -> &'static str {
        match self {
            SourceMode::HomodyneSqueezed(_) => "homodyne_squeezed",
            SourceMode::Coherent { .. } => "coherent",
        }
    }
}

/// Technical noise with a `1/f` density, added on top of the quantum noise.
///
/// `level` is the one-sided PSD (SNL units) at `corner` Hz. In coherent mode
/// the noise scales with the detected mean power, like laser intensity noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassicalNoiseSpec {
    pub level: f64,
    pub corner: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthesisConfig {
    pub mode: SourceMode,
    pub modulation: ModulationSpec,
    pub disturbance: DisturbanceSpec,
    pub fs: f64,
    pub duration: f64,
    pub seed: u64,
    pub classical: Option<ClassicalNoiseSpec>,
}

impl SynthesisConfig {
    pub fn n_samples(&self) -> usize {
        (self.duration * self.fs).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        self.modulation.validate()?;
        self.disturbance.validate()?;
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::Sampling(format!("sample rate must be > 0, got {}", self.fs)));
        }
        if self.fs < 10.0 * self.modulation.freq {
            return Err(Error::Sampling(format!(
                "fs = {} Hz is below 10x the dither frequency {} Hz",
                self.fs, self.modulation.freq
            )));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) || self.n_samples() == 0 {
            return Err(Error::param("duration", format!("{} s gives no samples", self.duration)));
        }
        if let Some(c) = self.classical {
            if !(c.level.is_finite() && c.level >= 0.0 && c.corner > 0.0 && c.corner < self.fs / 2.0) {
                return Err(Error::param("classical", "needs level >= 0 and 0 < corner < fs/2"));
            }
        }
        Ok(())
    }

    /// A downstream band-pass needs its upper corner below Nyquist.
    pub fn check_band(&self, f_high: f64) -> Result<()> {
        if self.fs < 2.0 * f_high {
            return Err(Error::Sampling(format!(
                "fs = {} Hz cannot carry a band up to {f_high} Hz",
                self.fs
            )));
        }
        Ok(())
    }
}

/// Sum of first-order low-passed white noises with poles two per decade,
/// weighted so the total density approximates `level · corner / f`.
#[derive(Clone, Debug)]
struct PinkNoise {
    stages: Vec<(f64, f64, f64)>, // (pole coefficient, input scale, state)
    rng: NoiseStream,
}

impl PinkNoise {
    fn new(spec: ClassicalNoiseSpec, fs: f64, seed: u64) -> Self {
        let spacing = std::f64::consts::LN_10 / 2.0;
        let c = 2.0 * spacing / std::f64::consts::PI;
        let mut stages = Vec::new();
        let mut p = spec.corner / 1000.0;
        while p < 0.2 * fs {
            // One-sided density S/(1+(f/p)²) from white noise of density S
            // through a one-pole smoother y += a (x − y).
            let s = c * spec.level * spec.corner / p;
            let a = 1.0 - (-2.0 * std::f64::consts::PI * p / fs).exp();
            stages.push((a, (s * fs / 2.0).sqrt(), 0.0));
            p *= spacing.exp();
        }
        Self {
            stages,
            rng: NoiseStream::new(seed, streams::CLASSICAL),
        }
    }

    #[inline]
    fn next(&mut self) -> f64 {
        let mut sum = 0.0;
        for st in &mut self.stages {
            let x = st.1 * self.rng.gaussian();
            st.2 += st.0 * (x - st.2);
            sum += st.2;
        }
        sum
    }
}

/// One synthesized sample with its ingredients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSample {
    pub phase: PhaseSample,
    pub mean: f64,
    /// Noise density (SNL units) at this instant.
    pub variance: f64,
    pub photocurrent: f64,
}

/// Streaming photocurrent generator. Call [`Synthesizer::step`] once per
/// sample with the control value computed from earlier samples.
#[derive(Clone, Debug)]
pub struct Synthesizer {
    source: Source,
    phase: PhaseModel,
    noise: NoiseStream,
    classical: Option<PinkNoise>,
    half_fs: f64,
}

#[derive(Clone, Copy, Debug)]
enum Source {
    Homodyne(QuadratureVariances),
    Coherent { pair: CoherentPairSpec, port: Port, sqrt_flux: f64 },
}

impl Synthesizer {
    pub fn new(cfg: &SynthesisConfig) -> Result<Self> {
        cfg.validate()?;
        let source = match cfg.mode {
            SourceMode::HomodyneSqueezed(spec) => Source::Homodyne(quadrature_variances(&spec)),
            SourceMode::Coherent { pair, port } => Source::Coherent {
                pair,
                port,
                sqrt_flux: pair.photon_flux().sqrt(),
            },
        };
        Ok(Self {
            source,
            phase: PhaseModel::new(cfg.modulation, cfg.disturbance, cfg.fs, cfg.seed)?,
            noise: NoiseStream::new(cfg.seed, streams::DETECTION),
            classical: cfg.classical.map(|c| PinkNoise::new(c, cfg.fs, cfg.seed)),
            half_fs: 0.5 * cfg.fs,
        })
    }

    #[inline]
    pub fn step(&mut self, control: f64) -> SynthSample {
        let phase = self.phase.next_sample(control);
        let (mean, variance, tech_scale) = match self.source {
            Source::Homodyne(ref v) => (0.0, homodyne_variance(v, phase.total), 1.0),
            Source::Coherent { ref pair, port, sqrt_flux } => {
                let p = fringe_power(pair, phase.total, port);
                (sqrt_flux * p, p, p)
            }
        };
        let mut photocurrent = mean + (variance * self.half_fs).sqrt() * self.noise.gaussian();
        if let Some(pink) = self.classical.as_mut() {
            photocurrent += tech_scale * pink.next();
        }
        SynthSample {
            phase,
            mean,
            variance,
            photocurrent,
        }
    }
}

/// How the actuator control term is supplied to [`synthesize`].
pub enum Feedback<'a> {
    Open,
    /// Precomputed control, one value per sample.
    Series(&'a [f64]),
    /// Called before sample `k` with the photocurrent of sample `k − 1`
    /// (`None` for the first sample); returns `control[k]`.
    Callback(&'a mut dyn FnMut(usize, Option<f64>) -> f64),
}

/// Synthesizes a full trace with channels `true_phase`, `photocurrent`
/// and `control`.
pub fn synthesize(cfg: &SynthesisConfig, feedback: Feedback<'_>) -> Result<SimTrace> {
    let n = cfg.n_samples();
    let mut synth = Synthesizer::new(cfg)?;
    if let Feedback::Series(c) = &feedback {
        if c.len() != n {
            return Err(Error::Input(format!("control series has {} samples, expected {n}", c.len())));
        }
    }
    let mut feedback = feedback;
    let mut true_phase = Vec::with_capacity(n);
    let mut photocurrent = Vec::with_capacity(n);
    let mut control = Vec::with_capacity(n);
    let mut last = None;
    for k in 0..n {
        let u = match &mut feedback {
            Feedback::Open => 0.0,
            Feedback::Series(c) => c[k],
            Feedback::Callback(f) => f(k, last),
        };
        if !u.is_finite() {
            return Err(Error::Input(format!("control sample {k} is not finite")));
        }
        let s = synth.step(u);
        true_phase.push(s.phase.slow);
        photocurrent.push(s.photocurrent);
        control.push(u);
        last = Some(s.photocurrent);
    }
    let mut trace = SimTrace::new(cfg.fs, cfg.seed, cfg.mode.name());
    trace.push_channel(Channel::TruePhase, true_phase)?;
    trace.push_channel(Channel::Photocurrent, photocurrent)?;
    trace.push_channel(Channel::Control, control)?;
    Ok(trace)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    /// Slow phase θ₀ + disturbance + control, without the dither (rad).
    TruePhase,
    Photocurrent,
    BpfOut,
    Envelope,
    ErrorSignal,
    /// Actuator phase (rad).
    Control,
}

impl Channel {
    pub const ALL: [Channel; 6] = [
        Channel::TruePhase,
        Channel::Photocurrent,
        Channel::BpfOut,
        Channel::Envelope,
        Channel::ErrorSignal,
        Channel::Control,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::TruePhase => "true_phase",
            Channel::Photocurrent => "photocurrent",
            Channel::BpfOut => "bpf_out",
            Channel::Envelope => "envelope",
            Channel::ErrorSignal => "error_signal",
            Channel::Control => "control",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.name() == s)
    }
}

/// A recorded run: named, equal-length channels sampled at `sample_rate`.
///
/// Long closed-loop runs usually keep every `decimation`-th sample; the
/// simulation itself always ran at `sample_rate · decimation`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimTrace {
    pub sample_rate: f64,
    pub seed: u64,
    pub decimation: usize,
    pub source: String,
    pub config_hash: Option<String>,
    columns: Vec<(Channel, Vec<f64>)>,
}

impl SimTrace {
    pub fn new(sample_rate: f64, seed: u64, source: &str) -> Self {
        Self {
            sample_rate,
            seed,
            decimation: 1,
            source: source.to_string(),
            config_hash: None,
            columns: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, |c| c.1.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channels(&self) -> impl Iterator<Item = Channel> + '_ {
        self.columns.iter().map(|c| c.0)
    }

    pub fn channel(&self, c: Channel) -> Option<&[f64]> {
        self.columns.iter().find(|x| x.0 == c).map(|x| x.1.as_slice())
    }

    /// Adds or replaces a channel. Lengths must agree and values be finite.
    pub fn push_channel(&mut self, c: Channel, data: Vec<f64>) -> Result<()> {
        if !self.columns.is_empty() && data.len() != self.len() && !(self.columns.len() == 1 && self.columns[0].0 == c) {
            return Err(Error::Input(format!(
                "channel {} has {} samples, trace has {}",
                c.name(),
                data.len(),
                self.len()
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Input(format!("channel {} sample {i} is not finite", c.name())));
        }
        match self.columns.iter_mut().find(|x| x.0 == c) {
            Some(slot) => slot.1 = data,
            None => self.columns.push((c, data)),
        }
        Ok(())
    }

    /// CSV with `#`-prefixed metadata lines, a header row of channel names,
    /// then one row per sample. Floats use the shortest representation that
    /// parses back to the same bits.
    pub fn write_csv<W: Write>(&self, mut w: W, version: &str) -> Result<()> {
        writeln!(w, "# tool = noiselock {version}")?;
        writeln!(w, "# source = {}", self.source)?;
        writeln!(w, "# sample_rate = {}", self.sample_rate)?;
        writeln!(w, "# decimation = {}", self.decimation)?;
        writeln!(w, "# seed = {}", self.seed)?;
        if let Some(h) = &self.config_hash {
            writeln!(w, "# config_hash = {h}")?;
        }
        let names: Vec<&str> = self.columns.iter().map(|c| c.0.name()).collect();
        writeln!(w, "{}", names.join(","))?;
        let mut line = String::new();
        for k in 0..self.len() {
            line.clear();
            for (i, (_, data)) in self.columns.iter().enumerate() {
                if i > 0 {
                    line.push(',');
                }
                line.push_str(&data[k].to_string());
            }
            writeln!(w, "{line}")?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut trace = SimTrace::new(0.0, 0, "");
        let mut header: Option<Vec<Channel>> = None;
        let mut data: Vec<Vec<f64>> = Vec::new();
        for (i, line) in r.lines().enumerate() {
            let line = line?;
            let lineno = i + 1;
            let bad = |m: String| Error::Config { line: lineno, message: m };
            if let Some(meta) = line.strip_prefix('#') {
                let Some((k, v)) = meta.split_once('=') else { continue };
                let v = v.trim();
                match k.trim() {
                    "sample_rate" => trace.sample_rate = v.parse().map_err(|_| bad(format!("bad sample_rate {v}")))?,
                    "decimation" => trace.decimation = v.parse().map_err(|_| bad(format!("bad decimation {v}")))?,
                    "seed" => trace.seed = v.parse().map_err(|_| bad(format!("bad seed {v}")))?,
                    "source" => trace.source = v.to_string(),
                    "config_hash" => trace.config_hash = Some(v.to_string()),
                    _ => {}
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            match &header {
                None => {
                    let cols = line
                        .split(',')
                        .map(|s| Channel::parse(s.trim()).ok_or_else(|| bad(format!("unknown channel {s}"))))
                        .collect::<Result<Vec<_>>>()?;
                    data = vec![Vec::new(); cols.len()];
                    header = Some(cols);
                }
                Some(cols) => {
                    let fields: Vec<&str> = line.split(',').collect();
                    if fields.len() != cols.len() {
                        return Err(bad(format!("expected {} fields, found {}", cols.len(), fields.len())));
                    }
                    for (col, f) in data.iter_mut().zip(fields) {
                        col.push(f.trim().parse().map_err(|_| bad(format!("bad number {f}")))?);
                    }
                }
            }
        }
        let cols = header.ok_or_else(|| Error::Input("CSV has no header row".into()))?;
        if !(trace.sample_rate > 0.0) {
            return Err(Error::Input("CSV lacks a positive sample_rate".into()));
        }
        for (c, d) in cols.into_iter().zip(data) {
            trace.push_channel(c, d)?;
        }
        Ok(trace)
    }
}

/// Unbiased sample variance of each disjoint window of `window` samples.
/// A trailing partial window is dropped.
pub fn variance_over_windows(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window < 2 {
        return Err(Error::Input(format!("window must be >= 2, got {window}")));
    }
    if window > x.len() {
        return Err(Error::Input(format!("window {window} exceeds series length {}", x.len())));
    }
    Ok(x.chunks_exact(window)
        .map(|w| {
            let m = w.iter().sum::<f64>() / window as f64;
            w.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (window - 1) as f64
        })
        .collect())
}

/// Mean of each disjoint window of `window` samples.
pub fn mean_over_windows(x: &[f64], window: usize) -> Result<Vec<f64>> {
    if window == 0 || window > x.len() {
        return Err(Error::Input(format!("window {window} invalid for series length {}", x.len())));
    }
    Ok(x.chunks_exact(window).map(|w| w.iter().sum::<f64>() / window as f64).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::Quadrature;
    use std::f64::consts::PI;

    fn homodyne(r: f64, theta0: f64, n: usize) -> SynthesisConfig {
        SynthesisConfig {
            mode: SourceMode::HomodyneSqueezed(SqueezedStateSpec::new(r, Quadrature::Amplitude, 0.0).unwrap()),
            modulation: ModulationSpec::new(theta0, 0.0, 1e3, 0.0).unwrap(),
            disturbance: DisturbanceSpec::None,
            fs: 1e6,
            duration: n as f64 / 1e6,
            seed: 17,
            classical: None,
        }
    }

    fn sample_variance(x: &[f64]) -> f64 {
        let m = x.iter().sum::<f64>() / x.len() as f64;
        x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (x.len() - 1) as f64
    }

    #[test]
    fn shot_noise_normalization() {
        let cfg = homodyne(0.0, 0.0, 1_000_000);
        let t = synthesize(&cfg, Feedback::Open).unwrap();
        let scale = (2.0 / cfg.fs).sqrt();
        let x: Vec<f64> = t.channel(Channel::Photocurrent).unwrap().iter().map(|v| v * scale).collect();
        assert!((sample_variance(&x) - 1.0).abs() < 0.005);
    }

    #[test]
    fn squeezed_quadrature_level() {
        let cfg = homodyne(0.41, PI / 2.0, 1_000_000);
        let t = synthesize(&cfg, Feedback::Open).unwrap();
        let v = sample_variance(t.channel(Channel::Photocurrent).unwrap()) * 2.0 / cfg.fs;
        let db = 10.0 * v.log10();
        assert!((db + 3.56).abs() < 0.05, "{db}");
    }

    #[test]
    fn dark_fringe_is_silent() {
        let pair = CoherentPairSpec::new(0.5, 0.5).unwrap();
        let mut cfg = homodyne(0.0, 3.0 * PI / 2.0, 10_000);
        cfg.mode = SourceMode::Coherent { pair, port: Port::D };
        let t = synthesize(&cfg, Feedback::Open).unwrap();
        assert!(t.channel(Channel::Photocurrent).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn identical_seed_is_bit_identical() {
        let mut cfg = homodyne(0.41, 0.3, 5000);
        cfg.disturbance = DisturbanceSpec::RandomWalk { diffusion: 0.1 };
        let a = synthesize(&cfg, Feedback::Open).unwrap();
        let b = synthesize(&cfg, Feedback::Open).unwrap();
        assert_eq!(a, b);
        cfg.seed += 1;
        assert_ne!(a, synthesize(&cfg, Feedback::Open).unwrap());
    }

    #[test]
    fn callback_sees_previous_sample_only() {
        let cfg = homodyne(0.2, 0.0, 100);
        let open = synthesize(&cfg, Feedback::Open).unwrap();
        let pc = open.channel(Channel::Photocurrent).unwrap().to_vec();
        let mut seen = Vec::new();
        let mut cb = |k: usize, last: Option<f64>| {
            seen.push((k, last));
            0.0
        };
        synthesize(&cfg, Feedback::Callback(&mut cb)).unwrap();
        assert_eq!(seen[0], (0, None));
        for k in 1..100 {
            assert_eq!(seen[k], (k, Some(pc[k - 1])));
        }
    }

    #[test]
    fn series_feedback_shifts_phase() {
        let cfg = homodyne(0.2, 0.0, 100);
        let t = synthesize(&cfg, Feedback::Series(&vec![0.25; 100])).unwrap();
        assert!(t.channel(Channel::TruePhase).unwrap().iter().all(|&p| (p - 0.25).abs() < 1e-15));
        assert!(synthesize(&cfg, Feedback::Series(&[0.0; 3])).is_err());
    }

    #[test]
    fn rejects_coarse_sampling() {
        let mut cfg = homodyne(0.2, 0.0, 100);
        cfg.fs = 5e3;
        cfg.duration = 1.0;
        assert!(matches!(Synthesizer::new(&cfg), Err(Error::Sampling(_))));
        assert!(homodyne(0.2, 0.0, 100).check_band(6e5).is_err());
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let mut cfg = homodyne(0.41, 0.1, 500);
        cfg.disturbance = DisturbanceSpec::Sinusoid { freq: 50.0, amplitude: 0.1 };
        let mut t = synthesize(&cfg, Feedback::Open).unwrap();
        t.config_hash = Some("abc123".into());
        let mut buf = Vec::new();
        t.write_csv(&mut buf, "0.0.0").unwrap();
        let back = SimTrace::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn windowed_variance_examples() {
        assert!(variance_over_windows(&[3.0; 100], 10).unwrap().iter().all(|&v| v == 0.0));
        assert!(variance_over_windows(&[1.0; 10], 1).is_err());
        assert!(variance_over_windows(&[1.0; 10], 11).is_err());

        // Piecewise: variance 1 then 4 in alternating 1000-sample segments.
        let mut g = NoiseStream::new(4, 0);
        let x: Vec<f64> = (0..20_000)
            .map(|k| if (k / 1000) % 2 == 0 { 1.0 } else { 2.0 } * g.gaussian())
            .collect();
        let v = variance_over_windows(&x, 1000).unwrap();
        for (i, vi) in v.iter().enumerate() {
            let expect = if i % 2 == 0 { 1.0 } else { 4.0 };
            assert!((vi / expect - 1.0).abs() < 0.2, "{i}: {vi}");
        }
    }

    #[test]
    fn windowed_variance_spread_matches_chi_square() {
        let mut g = NoiseStream::new(8, 0);
        let w = 64;
        let x: Vec<f64> = (0..w * 20_000).map(|_| g.gaussian()).collect();
        let v = variance_over_windows(&x, w).unwrap();
        let spread = sample_variance(&v).sqrt();
        // Var of an unbiased variance estimate is 2σ⁴/(W−1).
        let expect = (2.0 / (w as f64 - 1.0)).sqrt();
        assert!((spread / expect - 1.0).abs() < 0.03, "{spread} vs {expect}");
    }

    #[test]
    fn pink_noise_has_one_over_f_density() {
        let fs = 1e4;
        let spec = ClassicalNoiseSpec { level: 100.0, corner: 10.0 };
        let mut p = PinkNoise::new(spec, fs, 1);
        let x: Vec<f64> = (0..2_000_000).map(|_| p.next()).collect();
        let s = crate::dsp::welch_psd(&x, fs, 1 << 14, 0.5).unwrap();
        for f in [1.0, 10.0, 100.0] {
            let got = s.band_mean(0.8 * f, 1.25 * f).unwrap();
            let expect = spec.level * spec.corner / f;
            let db = 10.0 * (got / expect).log10();
            assert!(db.abs() < 1.5, "{f} Hz: {db} dB");
        }
    }
}
