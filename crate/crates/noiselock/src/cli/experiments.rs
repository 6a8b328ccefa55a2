//! The experiments behind `noiselock run`.

use std::f64::consts::PI;

use rayon::prelude::*;

use super::config::{Experiment, ExperimentConfig};
use super::output::{Check, Outcome, Plot, Provenance, Summary, Table};
use crate::analytic::{
    error_signal_coherent, error_signal_homodyne, phase_grid, stability_homodyne_scaled, LockPoint,
};
use crate::dsp::{welch_psd, Bandpass, DetectorLaw, DspChainConfig, NlChain, Spectrum};
use crate::error::{Error, Result};
use crate::feedback::{
    cml_slope, error_curve, fit_single_gain, harmonic_of, lock_phase, lock_settings, measure_slope,
    measure_stability, run_closed_loop_with, CmlReadout, GrabOptions, HarmonicFit, LockReport, LoopOptions, PsdOptions,
    ServoConfig, StabilityEstimate, StabilityOptions, SweepOptions,
};
use crate::plant::{fringe_power, homodyne_variance, quadrature_variances, Port};
use crate::rng::{streams, NoiseStream};
use crate::timeseries::{SourceMode, SynthesisConfig, Synthesizer};

/// Runs the configured experiment. Nothing is written to disk.
pub fn evaluate(cfg: &ExperimentConfig) -> Result<Outcome> {
    cfg.validate()?;
    log::info!("running {} (seed {}, scale {})", cfg.experiment.name(), cfg.seed, cfg.scale_factor);
    match cfg.experiment {
        Experiment::SweepTheta => sweep_theta(cfg),
        Experiment::LockAcquire => lock_acquire(cfg),
        Experiment::StabilityVsR => stability_vs_r(cfg),
        Experiment::StabilityVsBandwidth => stability_vs_bandwidth(cfg),
        Experiment::StabilityVsLoss => stability_vs_loss(cfg),
        Experiment::SpectrumInloop => spectrum_inloop(cfg),
        Experiment::CoherentVsCml => coherent_vs_cml(cfg),
    }
}

fn provenance(cfg: &ExperimentConfig) -> Provenance {
    Provenance {
        experiment: cfg.experiment.name().into(),
        config_hash: cfg.hash(),
        seed: cfg.seed,
        scale_factor: cfg.scale_factor,
    }
}

fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Circular distance on a circle of circumference `period`.
fn circular_distance(a: f64, b: f64, period: f64) -> f64 {
    let d = (a - b).rem_euclid(period);
    d.min(period - d)
}

/// Model error-signal shape and expected zero crossings for the source.
fn error_shape(mode: &SourceMode, depth: f64) -> (Box<dyn Fn(f64) -> f64 + Send + Sync>, Vec<f64>) {
    match *mode {
        SourceMode::HomodyneSqueezed(spec) => {
            let vars = quadrature_variances(&spec);
            (
                Box::new(move |t| error_signal_homodyne(&vars, t, depth, 1.0, 1.0)),
                (0..4).map(|k| k as f64 * PI / 2.0).collect(),
            )
        }
        SourceMode::Coherent { pair, port } => {
            let sign = if port == Port::D { 1.0 } else { -1.0 };
            (
                Box::new(move |t| sign * error_signal_coherent(&pair, t, depth, 1.0)),
                vec![PI / 2.0, 3.0 * PI / 2.0],
            )
        }
    }
}

fn has_asymmetry(mode: &SourceMode) -> bool {
    match mode {
        SourceMode::HomodyneSqueezed(spec) => {
            let v = quadrature_variances(spec);
            v.max() - v.min() > 1e-12 * v.max()
        }
        SourceMode::Coherent { pair, .. } => pair.amp_a() * pair.amp_b() > 0.0,
    }
}

fn sweep_theta(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    let chain = cfg.chain()?;
    let tol = &cfg.tolerances;
    let grid = phase_grid(cfg.sweep.theta_start, cfg.sweep.theta_end, cfg.sweep.points);
    let opts = SweepOptions::for_chain(&chain, cfg.time(cfg.sweep.point_duration));
    let points = error_curve(&synth, &chain, &grid, &opts)?;
    let theta: Vec<f64> = points.iter().map(|p| p.theta0).collect();
    let err: Vec<f64> = points.iter().map(|p| p.error_mean).collect();

    let (shape, expected_zeros) = error_shape(&synth.mode, synth.modulation.depth);
    let (gain, rms) = fit_single_gain(&theta, &err, &shape);
    let k = harmonic_of(&synth.mode);
    let level = |t: f64| match synth.mode {
        SourceMode::HomodyneSqueezed(spec) => db(homodyne_variance(&quadrature_variances(&spec), t)),
        SourceMode::Coherent { pair, port } => db(fringe_power(&pair, t, port)),
    };

    let mut summary = Summary::new(provenance(cfg));
    summary.metric("points", points.len() as f64);
    summary.metric("point_duration_s", opts.duration - opts.settle);
    summary.metric("fit_gain", gain);
    summary.metric("fit_residual_rms", rms);
    let max_z = points
        .iter()
        .map(|p| p.error_mean.abs() / p.error_stderr)
        .fold(0.0, f64::max);
    summary.metric("max_abs_mean_over_stderr", max_z);

    if has_asymmetry(&synth.mode) {
        let rel = rms / gain.abs();
        summary.metric("fit_residual_relative", rel);
        summary.check(Check::new(
            "fit_residual",
            rel < tol.fit_residual,
            rel,
            tol.fit_residual,
            "rms residual of the one-gain shape fit over |gain|",
        ));
        let fit = HarmonicFit::fit(&theta, &err, k)?;
        let crossings = fit.zero_crossings();
        let period = 2.0 * PI;
        let span = cfg.sweep.theta_start..cfg.sweep.theta_end;
        for (i, &z) in expected_zeros.iter().enumerate() {
            let inside = (-1..=2).any(|m| span.contains(&(z + period * m as f64)));
            if !inside {
                continue;
            }
            let nearest = crossings
                .iter()
                .map(|&(c, _)| (c, circular_distance(c, z, period)))
                .min_by(|a, b| a.1.total_cmp(&b.1));
            let (at, dist) = nearest.unwrap_or((f64::NAN, f64::INFINITY));
            summary.metric(&format!("zero_crossing_{i}"), at);
            summary.check(Check::new(
                &format!("zero_crossing_{i}"),
                dist <= tol.zero_crossing,
                dist,
                tol.zero_crossing,
                format!("distance (rad) of the fitted crossing from {z:.6}"),
            ));
        }
    } else {
        let worst = points
            .iter()
            .map(|p| p.error_mean.abs() - tol.null_sigma * p.error_stderr)
            .fold(f64::NEG_INFINITY, f64::max);
        summary.check(Check::new(
            "null_error_signal",
            worst < 0.0,
            max_z,
            tol.null_sigma,
            "largest |mean| / stderr over the grid; no asymmetry, so no signal",
        ));
    }

    let mut table = Table::new(
        "sweep",
        &["theta", "level_db", "error_model", "error", "error_stderr", "envelope_mean"],
    );
    for p in &points {
        table.push(vec![
            p.theta0,
            level(p.theta0),
            gain * shape(p.theta0),
            p.error_mean,
            p.error_stderr,
            p.envelope_mean,
        ]);
    }
    let fine = phase_grid(cfg.sweep.theta_start, cfg.sweep.theta_end, 400);
    let mut out = Outcome::new(summary);
    out.plots.push(Plot {
        name: "level".into(),
        title: "Detected noise level vs phase".into(),
        x_label: "theta (rad)".into(),
        y_label: "level (dB)".into(),
        series: vec![("model".into(), fine.iter().map(|&t| (t, level(t))).collect())],
        log_x: false,
    });
    out.plots.push(Plot {
        name: "error".into(),
        title: "Noise-locking error signal vs phase".into(),
        x_label: "theta (rad)".into(),
        y_label: "error".into(),
        series: vec![
            ("simulated".into(), theta.iter().copied().zip(err.iter().copied()).collect()),
            ("fitted model".into(), fine.iter().map(|&t| (t, gain * shape(t))).collect()),
        ],
        log_x: false,
    });
    out.tables.push(table);
    Ok(out)
}

/// Servo tuned against the error slope measured at `target`, plus the
/// synthesis settings (phase and demodulation) that command it.
fn tune_for(
    cfg: &ExperimentConfig,
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    target: LockPoint,
) -> Result<(SynthesisConfig, ServoConfig, f64)> {
    let phase = lock_phase(&synth.mode, target)?;
    let (sign, demod) = lock_settings(target);
    let mut s = *synth;
    s.modulation.demod_phase = demod;
    let opts = SweepOptions::for_chain(chain, cfg.time(cfg.stability.slope_duration));
    let slope = measure_slope(&s, chain, phase, cfg.stability.slope_delta, &opts)?;
    if !(slope > 0.0) {
        return Err(Error::Input(format!(
            "error slope at the {} point is {slope}; check lockin.ref_phase",
            target.name()
        )));
    }
    let servo = ServoConfig::tuned(cfg.freq(cfg.servo.ugf), slope, sign, cfg.servo.limit)?;
    Ok((s, servo, slope))
}

fn loop_options(cfg: &ExperimentConfig, slope: f64) -> LoopOptions {
    LoopOptions {
        engage_at: cfg.time(cfg.servo.engage_at),
        acquisition_threshold: cfg.servo.threshold,
        acquisition_periods: cfg.servo.acquisition_periods,
        measure_from: cfg.time(cfg.run.settle),
        slope: Some(slope),
        nn_periods: cfg.stability.nn_periods,
        record_decimation: None,
        psd: None,
        grab: (cfg.servo.grab_rate > 0.0).then(|| GrabOptions {
            rate: cfg.freq(cfg.servo.grab_rate),
            hysteresis: cfg.servo.grab_hysteresis * slope.abs(),
        }),
    }
}

fn lock_code(report: &LockReport) -> f64 {
    match report.locked_to {
        Some(p) if p == report.target => 1.0,
        Some(_) => 2.0,
        None => 0.0,
    }
}

fn lock_acquire(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    let chain = cfg.chain()?;
    let target = cfg.servo.lock_point;
    let mut summary = Summary::new(provenance(cfg));
    let engage = cfg.time(cfg.servo.engage_at);
    let max_time = cfg.time(cfg.acquire.max_time);

    if cfg.acquire.trials == 1 {
        let (mut s, servo, slope) = tune_for(cfg, &synth, &chain, target)?;
        s.modulation.theta0 = synth.modulation.theta0;
        s.modulation.demod_phase += synth.modulation.demod_phase;
        let mut opts = loop_options(cfg, slope);
        if cfg.run.record_rate > 0.0 {
            opts.record_decimation = Some((cfg.run.sample_rate / cfg.run.record_rate).round().max(1.0) as usize);
        }
        let (mut trace, report) = run_closed_loop_with(&s, &chain, &servo, s.duration, &opts)?;
        trace.config_hash = Some(cfg.hash());
        summary.metric("error_slope", slope);
        summary.metric("servo_ki", servo.ki);
        summary.metric("servo_kp", servo.kp);
        summary.metric("lock_phase", report.lock_point);
        summary.metric("final_phase", report.final_phase);
        summary.metric("residual_mean_true", report.residual_mean_true);
        summary.metric("residual_rms_true", report.residual_rms_true);
        summary.metric("error_mean", report.error_mean);
        summary.metric("error_rms", report.error_rms);
        let acq = report.acquisition_time.map(|t| (t - engage).max(0.0));
        summary.metric("acquisition_time_s", acq.unwrap_or(f64::NAN));
        summary.metric("acquisition_time_lab_s", acq.map_or(f64::NAN, |t| t * cfg.scale_factor));
        if let Some(t) = report.grabbed_at {
            summary.metric("grabbed_at_lab_s", t * cfg.scale_factor);
        }
        summary.notes.push(format!("commanded lock point: {}", report.target.name()));
        summary.check(Check::new(
            "acquired",
            report.acquired && report.locked_to == Some(report.target),
            lock_code(&report),
            1.0,
            "1 = held the commanded point to the end, 2 = held its partner, 0 = no lock",
        ));
        let t = acq.unwrap_or(f64::INFINITY);
        summary.check(Check::new(
            "acquisition_time",
            t <= max_time,
            t * cfg.scale_factor,
            cfg.acquire.max_time,
            "lab-scale seconds from loop closure to the final in-threshold stretch",
        ));
        summary.check(Check::new(
            "post_lock_offset",
            report.residual_mean_true.abs() < cfg.servo.threshold,
            report.residual_mean_true.abs(),
            cfg.servo.threshold,
            "mean phase offset from the lock point after settling (rad)",
        ));
        let mut out = Outcome::new(summary);
        if !trace.is_empty() {
            let dt = 1.0 / trace.sample_rate;
            let series = |c| {
                trace
                    .channel(c)
                    .unwrap_or(&[])
                    .iter()
                    .enumerate()
                    .map(|(i, &v)| (i as f64 * dt * cfg.scale_factor, v))
                    .collect::<Vec<_>>()
            };
            use crate::timeseries::Channel;
            out.plots.push(Plot {
                name: "trace_error".into(),
                title: "Error signal; loop closes at the engage time".into(),
                x_label: "lab time (s)".into(),
                y_label: "error".into(),
                series: vec![("error".into(), series(Channel::ErrorSignal))],
                log_x: false,
            });
            let mut phase_series = vec![("phase (rad)".into(), series(Channel::TruePhase))];
            if let SourceMode::Coherent { pair, port } = s.mode {
                let p = series(Channel::TruePhase)
                    .into_iter()
                    .map(|(t, th)| (t, fringe_power(&pair, th, port.other())))
                    .collect();
                phase_series.push((format!("power on port {:?}", port.other()), p));
            }
            out.plots.push(Plot {
                name: "trace_phase".into(),
                title: "Interferometer phase".into(),
                x_label: "lab time (s)".into(),
                y_label: "phase (rad) / power".into(),
                series: phase_series,
                log_x: false,
            });
            out.traces.push(("trace".into(), trace));
        }
        return Ok(out);
    }

    // Many trials from random initial phases, optionally with the
    // demodulation flipped to check that the partner point is selected.
    let mut rng = NoiseStream::new(cfg.seed, streams::INITIAL_PHASE);
    let starts: Vec<f64> = (0..cfg.acquire.trials).map(|_| 2.0 * PI * rng.uniform()).collect();
    let mut variants = vec![(false, tune_for(cfg, &synth, &chain, target)?)];
    if cfg.acquire.flip_check {
        variants.push((true, tune_for(cfg, &synth, &chain, target.partner())?));
    }
    let jobs: Vec<(usize, usize)> = (0..variants.len())
        .flat_map(|v| (0..starts.len()).map(move |i| (v, i)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(v, i)| {
            let (_, (base, servo, slope)) = &variants[v];
            let mut s = *base;
            s.modulation.theta0 = starts[i];
            s.seed = cfg.seed.wrapping_add(i as u64);
            let (_, r) = run_closed_loop_with(&s, &chain, servo, s.duration, &loop_options(cfg, *slope))?;
            Ok((v, i, r))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut table = Table::new(
        "trials",
        &["trial", "flipped", "theta0", "acquired", "acquisition_time_lab_s", "locked_to", "final_phase"],
    );
    for (v, i, r) in &results {
        table.push(vec![
            *i as f64,
            if variants[*v].0 { 1.0 } else { 0.0 },
            starts[*i],
            if r.acquired { 1.0 } else { 0.0 },
            r.acquisition_time.map_or(f64::NAN, |t| (t - engage).max(0.0) * cfg.scale_factor),
            lock_code(r),
            r.final_phase,
        ]);
    }
    let succeeded = |r: &LockReport| {
        r.acquired
            && r.locked_to == Some(r.target)
            && r.acquisition_time.is_some_and(|t| t - engage <= max_time)
    };
    let n = starts.len() as f64;
    let primary = results.iter().filter(|(v, _, r)| *v == 0 && succeeded(r)).count() as f64 / n;
    summary.metric("trials", n);
    summary.metric("acquired_fraction", primary);
    summary.check(Check::new(
        "acquisition_fraction",
        primary >= cfg.tolerances.acquisition_fraction,
        primary,
        cfg.tolerances.acquisition_fraction,
        format!("fraction locked to {} within acquire.max_time", target.name()),
    ));
    if cfg.acquire.flip_check {
        let flipped: Vec<&LockReport> = results.iter().filter(|(v, _, _)| *v == 1).map(|(_, _, r)| r).collect();
        let converged: Vec<&&LockReport> = flipped.iter().filter(|r| r.locked_to.is_some()).collect();
        let right = converged.iter().filter(|r| r.locked_to == Some(target.partner())).count() as f64;
        let frac = if converged.is_empty() { 0.0 } else { right / converged.len() as f64 };
        summary.metric("flipped_converged", converged.len() as f64);
        summary.metric("flipped_acquired_fraction", flipped.iter().filter(|r| succeeded(r)).count() as f64 / n);
        summary.metric("flipped_selects_partner_fraction", frac);
        summary.check(Check::new(
            "flip_selects_partner",
            !converged.is_empty() && right as usize == converged.len(),
            frac,
            1.0,
            format!("converged flipped runs that settled on {}", target.partner().name()),
        ));
    }
    let mut out = Outcome::new(summary);
    out.tables.push(table);
    Ok(out)
}

fn stability_options(cfg: &ExperimentConfig) -> StabilityOptions {
    let st = &cfg.stability;
    StabilityOptions {
        ugf: cfg.freq(cfg.servo.ugf),
        duration: cfg.time(cfg.run.duration),
        settle: cfg.time(cfg.run.settle),
        slope_duration: cfg.time(st.slope_duration),
        slope_delta: st.slope_delta,
        nn_periods: st.nn_periods,
        servo_limit: cfg.servo.limit,
        threshold: st.threshold,
    }
}

fn require_homodyne(synth: &SynthesisConfig, what: &str) -> Result<()> {
    match synth.mode {
        SourceMode::HomodyneSqueezed(_) => Ok(()),
        _ => Err(Error::Mode(format!("{what} needs plant.mode = homodyne_squeezed"))),
    }
}

fn with_plant(synth: &SynthesisConfig, squeeze_factor: f64, loss: f64) -> Result<SynthesisConfig> {
    let SourceMode::HomodyneSqueezed(spec) = synth.mode else {
        return Err(Error::Mode("squeezed plant expected".into()));
    };
    let mut s = *synth;
    s.mode = SourceMode::HomodyneSqueezed(crate::plant::SqueezedStateSpec::new(
        squeeze_factor,
        spec.squeezed_quadrature(),
        loss,
    )?);
    Ok(s)
}

fn both_points(
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    seeds: usize,
    opts: &StabilityOptions,
) -> Result<(StabilityEstimate, StabilityEstimate)> {
    let sq = measure_stability(synth, chain, LockPoint::Squeezed, seeds, opts)?;
    let anti = measure_stability(synth, chain, LockPoint::AntiSqueezed, seeds, opts)?;
    Ok((sq, anti))
}

fn stability_vs_r(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    require_homodyne(&synth, "stability_vs_R")?;
    let st = &cfg.stability;
    let mut summary = Summary::new(provenance(cfg));

    let mut analytic = Table::new("analytic", &["squeeze_factor", "loss", "dtheta_squeezed", "dtheta_anti_squeezed"]);
    let mut worst: f64 = 0.0;
    let mut plots = Vec::new();
    for &loss in &st.losses {
        let mut sq_s = Vec::new();
        let mut an_s = Vec::new();
        for i in 0..st.r_points {
            let r = st.r_min + (st.r_max - st.r_min) * i as f64 / (st.r_points - 1) as f64;
            let (sq, an) = stability_homodyne_scaled(r, loss, st.bandwidth_product)?;
            worst = worst.max(sq.delta_theta / an.delta_theta);
            analytic.push(vec![r, loss, sq.delta_theta, an.delta_theta]);
            sq_s.push((r, sq.delta_theta));
            an_s.push((r, an.delta_theta));
        }
        plots.push((format!("squeezed, loss {loss}"), sq_s));
        plots.push((format!("anti-squeezed, loss {loss}"), an_s));
    }
    summary.metric("bandwidth_product", st.bandwidth_product);
    summary.check(Check::new(
        "squeezed_below_anti",
        worst < 1.0,
        worst,
        1.0,
        "largest analytic ratio of squeezed to anti-squeezed stability",
    ));

    let mut mc = Table::new(
        "monte_carlo",
        &[
            "squeeze_factor",
            "loss",
            "dtheta_squeezed",
            "dtheta_squeezed_std",
            "dtheta_anti",
            "dtheta_anti_std",
            "ratio",
            "expected_ratio",
            "true_rms_squeezed",
            "true_rms_anti",
            "excluded",
        ],
    );
    let opts = stability_options(cfg);
    let chain = cfg.chain()?;
    let loss = cfg.plant.loss_lambda;
    for &r in &st.squeeze_factors {
        let s = with_plant(&synth, r, loss)?;
        let (sq, an) = both_points(&s, &chain, st.seeds, &opts)?;
        let (esq, ean) = stability_homodyne_scaled(r, loss, st.bandwidth_product)?;
        let expected = esq.delta_theta / ean.delta_theta;
        let ratio = sq.noise_on_noise.mean / an.noise_on_noise.mean;
        mc.push(vec![
            r,
            loss,
            sq.noise_on_noise.mean,
            sq.noise_on_noise.std,
            an.noise_on_noise.mean,
            an.noise_on_noise.std,
            ratio,
            expected,
            sq.true_rms.mean,
            an.true_rms.mean,
            (sq.excluded + an.excluded) as f64,
        ]);
        let rel = (ratio / expected - 1.0).abs();
        summary.metric(&format!("ratio_r{r}"), ratio);
        summary.metric(&format!("expected_ratio_r{r}"), expected);
        summary.metric(&format!("true_rms_ratio_r{r}"), sq.true_rms.mean / an.true_rms.mean);
        summary.check(Check::new(
            &format!("stability_ratio_r{r}"),
            rel <= cfg.tolerances.stability_ratio && sq.excluded + an.excluded == 0,
            rel,
            cfg.tolerances.stability_ratio,
            format!(
                "relative error of Monte Carlo squeezed/anti-squeezed ratio {ratio:.4} vs {expected:.4} over {} seeds",
                st.seeds
            ),
        ));
    }

    let mut out = Outcome::new(summary);
    out.plots.push(Plot {
        name: "stability".into(),
        title: "Lock stability vs squeeze factor".into(),
        x_label: "squeeze factor R".into(),
        y_label: "delta theta (rad)".into(),
        series: plots,
        log_x: false,
    });
    out.tables.push(analytic);
    if !mc.rows.is_empty() {
        out.tables.push(mc);
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

fn stability_vs_bandwidth(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    let st = &cfg.stability;
    if st.bandwidth_factors.len() < 2 {
        return Err(Error::param("stability.bandwidth_factors", "need at least two factors"));
    }
    let opts = stability_options(cfg);
    let fs = cfg.sample_rate();
    let target = cfg.servo.lock_point;
    let mut table = Table::new(
        "bandwidth",
        &[
            "factor",
            "f_low_lab_hz",
            "f_high_lab_hz",
            "statistical_bandwidth_lab_hz",
            "dtheta",
            "dtheta_std",
            "true_rms",
            "excluded",
        ],
    );
    let (mut bs, mut dt, mut width, mut truth) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut excluded = 0;
    for &f in &st.bandwidth_factors {
        let chain = cfg.chain_scaled(f)?;
        let b = Bandpass::new(chain.bandpass, fs)?.statistical_bandwidth();
        let est = measure_stability(&synth, &chain, target, st.seeds, &opts)?;
        excluded += est.excluded;
        table.push(vec![
            f,
            chain.bandpass.f_low / cfg.scale_factor,
            chain.bandpass.f_high / cfg.scale_factor,
            b / cfg.scale_factor,
            est.noise_on_noise.mean,
            est.noise_on_noise.std,
            est.true_rms.mean,
            est.excluded as f64,
        ]);
        bs.push(b);
        width.push(chain.bandpass.f_high - chain.bandpass.f_low);
        dt.push(est.noise_on_noise.mean);
        truth.push(est.true_rms.mean);
    }
    let slope = log_log_slope(&bs, &dt);
    let mut summary = Summary::new(provenance(cfg));
    summary.metric("loglog_slope", slope);
    summary.metric("loglog_slope_vs_nominal_width", log_log_slope(&width, &dt));
    summary.metric("loglog_slope_true_rms", log_log_slope(&bs, &truth));
    summary.metric(
        "bandwidth_span",
        bs.iter().cloned().fold(0.0, f64::max) / bs.iter().cloned().fold(f64::INFINITY, f64::min),
    );
    summary.check(Check::new(
        "bandwidth_slope",
        (slope + 0.25).abs() <= cfg.tolerances.bandwidth_slope && excluded == 0,
        slope,
        cfg.tolerances.bandwidth_slope,
        format!("log-log slope of stability vs statistical bandwidth, expected -0.25 ({excluded} seeds lost lock)"),
    ));
    let mut out = Outcome::new(summary);
    out.plots.push(Plot {
        name: "bandwidth".into(),
        title: format!("{} lock stability vs detection bandwidth", target.name()),
        x_label: "statistical bandwidth, simulation Hz (log)".into(),
        y_label: "delta theta (rad)".into(),
        series: vec![("Monte Carlo".into(), bs.iter().copied().zip(dt.iter().copied()).collect())],
        log_x: true,
    });
    out.tables.push(table);
    Ok(out)
}

fn ordering(values: &[f64]) -> f64 {
    values.windows(2).map(|w| w[1] / w[0]).fold(f64::INFINITY, f64::min)
}

fn stability_vs_loss(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    require_homodyne(&synth, "stability_vs_loss")?;
    let st = &cfg.stability;
    let mut losses = st.losses.clone();
    losses.sort_by(f64::total_cmp);
    losses.dedup();
    if losses.len() < 2 {
        return Err(Error::param("stability.losses", "need at least two distinct losses"));
    }
    let opts = stability_options(cfg);
    let chain = cfg.chain()?;
    let r = cfg.plant.squeeze_factor;
    let mut table = Table::new(
        "loss",
        &[
            "loss",
            "dtheta_squeezed",
            "dtheta_squeezed_std",
            "dtheta_anti",
            "dtheta_anti_std",
            "analytic_squeezed",
            "analytic_anti",
            "excluded",
        ],
    );
    let (mut mc_sq, mut mc_an, mut an_sq, mut an_an) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut excluded = 0;
    for &l in &losses {
        let s = with_plant(&synth, r, l)?;
        let (sq, an) = both_points(&s, &chain, st.seeds, &opts)?;
        let (asq, aan) = stability_homodyne_scaled(r, l, st.bandwidth_product)?;
        excluded += sq.excluded + an.excluded;
        table.push(vec![
            l,
            sq.noise_on_noise.mean,
            sq.noise_on_noise.std,
            an.noise_on_noise.mean,
            an.noise_on_noise.std,
            asq.delta_theta,
            aan.delta_theta,
            (sq.excluded + an.excluded) as f64,
        ]);
        mc_sq.push(sq.noise_on_noise.mean);
        mc_an.push(an.noise_on_noise.mean);
        an_sq.push(asq.delta_theta);
        an_an.push(aan.delta_theta);
    }
    let mut summary = Summary::new(provenance(cfg));
    summary.metric("squeeze_factor", r);
    for (name, v, what) in [
        ("analytic_order_squeezed", &an_sq, "analytic squeezed"),
        ("analytic_order_anti", &an_an, "analytic anti-squeezed"),
        ("monte_carlo_order_squeezed", &mc_sq, "Monte Carlo squeezed"),
        ("monte_carlo_order_anti", &mc_an, "Monte Carlo anti-squeezed"),
    ] {
        let m = ordering(v);
        summary.check(Check::new(
            name,
            m > 1.0 && excluded == 0,
            m,
            1.0,
            format!("smallest ratio of {what} stability between successive losses"),
        ));
    }
    let mut out = Outcome::new(summary);
    let pair = |v: &[f64]| losses.iter().copied().zip(v.iter().copied()).collect::<Vec<_>>();
    out.plots.push(Plot {
        name: "loss".into(),
        title: "Lock stability vs detection loss".into(),
        x_label: "loss".into(),
        y_label: "delta theta (rad)".into(),
        series: vec![
            ("squeezed, Monte Carlo".into(), pair(&mc_sq)),
            ("anti-squeezed, Monte Carlo".into(), pair(&mc_an)),
        ],
        log_x: false,
    });
    out.tables.push(table);
    Ok(out)
}

fn db_band(s: &Spectrum, lo: f64, hi: f64) -> Result<f64> {
    s.band_mean(lo, hi)
        .map(db)
        .ok_or_else(|| Error::Input(format!("no spectrum bins between {lo} and {hi} Hz")))
}

fn spectrum_inloop(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    let chain = cfg.chain()?;
    let quiet = if cfg.servo.lock_point.is_minimum() {
        cfg.servo.lock_point
    } else {
        cfg.servo.lock_point.partner()
    };
    let loud = quiet.partner();
    let psd = PsdOptions {
        decimation: cfg.spectrum.decimation,
        segment: cfg.spectrum.segment,
    };
    let runs = [quiet, loud]
        .par_iter()
        .map(|&target| {
            let (mut s, servo, slope) = tune_for(cfg, &synth, &chain, target)?;
            s.modulation.theta0 = lock_phase(&s.mode, target)?;
            let mut opts = loop_options(cfg, slope);
            opts.engage_at = 0.0;
            opts.psd = Some(psd);
            let (_, report) = run_closed_loop_with(&s, &chain, &servo, s.duration, &opts)?;
            Ok(report)
        })
        .collect::<Result<Vec<_>>>()?;
    let (rq, rl) = (&runs[0], &runs[1]);
    let (sq, sl) = match (&rq.error_signal_psd, &rl.error_signal_psd) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::Input("closed loop returned no spectrum".into())),
    };
    let fu = cfg.freq(cfg.servo.ugf);
    let mut summary = Summary::new(provenance(cfg));
    summary.metric("ugf_hz", fu);
    summary.metric("ugf_lab_hz", cfg.servo.ugf);
    summary.metric("bin_width_hz", sq.bin_width());
    for (r, name) in [(rq, quiet.name()), (rl, loud.name())] {
        summary.metric(&format!("{name}_acquired"), if r.acquired { 1.0 } else { 0.0 });
        summary.metric(&format!("{name}_residual_rms_true"), r.residual_rms_true);
    }
    let below: Vec<(f64, f64)> = sq
        .freqs
        .iter()
        .zip(sq.psd.iter().zip(&sl.psd))
        .filter(|(f, _)| **f > 0.0 && **f < fu)
        .map(|(f, (a, b))| (*f, db(*b) - db(*a)))
        .collect();
    let margin = below.iter().map(|x| x.1).fold(f64::INFINITY, f64::min);
    summary.check(Check::new(
        "louder_point_above_below_ugf",
        !below.is_empty() && margin > 0.0 && rq.acquired && rl.acquired,
        margin,
        0.0,
        format!(
            "smallest dB excess of the {} lock over the {} lock across {} bins below the unity-gain frequency",
            loud.name(),
            quiet.name(),
            below.len()
        ),
    ));
    for (s, name) in [(sq, quiet.name()), (sl, loud.name())] {
        let low = db_band(s, fu / 8.0, fu / 4.0)?;
        let high = db_band(s, fu, 2.0 * fu)?;
        let suppression = high - low;
        summary.metric(&format!("{name}_suppression_db"), suppression);
        summary.check(Check::new(
            &format!("{name}_loop_suppression"),
            suppression >= cfg.tolerances.plateau_db,
            suppression,
            cfg.tolerances.plateau_db,
            "dB between the [f_u, 2 f_u] band and the [f_u/8, f_u/4] plateau",
        ));
    }

    let mut table = Table::new(
        "spectra",
        &["freq_hz", "freq_lab_hz", &format!("{}_db", quiet.name()), &format!("{}_db", loud.name())],
    );
    for (i, &f) in sq.freqs.iter().enumerate() {
        table.push(vec![f, f / cfg.scale_factor, db(sq.psd[i]), db(sl.psd[i])]);
    }
    let series = |s: &Spectrum| {
        s.freqs
            .iter()
            .zip(&s.psd)
            .skip(1)
            .map(|(f, p)| (f / cfg.scale_factor, db(*p)))
            .collect::<Vec<_>>()
    };
    let mut out = Outcome::new(summary);
    out.plots.push(Plot {
        name: "spectra".into(),
        title: "In-loop error-signal spectra".into(),
        x_label: "lab frequency (Hz, log)".into(),
        y_label: "PSD (dB)".into(),
        series: vec![
            (format!("{} lock", quiet.name()), series(sq)),
            (format!("{} lock", loud.name()), series(sl)),
        ],
        log_x: true,
    });
    out.tables.push(table);
    Ok(out)
}

/// Open-loop error-point series at a fixed phase: the noise-locking chain
/// and a coherent-modulation readout on the same photocurrent, each
/// block-averaged over `decimation` samples.
fn held_error_series(
    cfg: &ExperimentConfig,
    synth: &SynthesisConfig,
    chain: &DspChainConfig,
    theta0: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let SourceMode::Coherent { pair, .. } = synth.mode else {
        return Err(Error::Mode("coherent_vs_cml needs plant.mode = coherent".into()));
    };
    let mut s = *synth;
    s.modulation.theta0 = theta0;
    s.check_band(chain.bandpass.f_high)?;
    let mut syn = Synthesizer::new(&s)?;
    let mut nl = NlChain::new(chain, s.fs)?;
    let mut cml = CmlReadout::new(&pair, &s.modulation, chain.lockin.lpf_time_constant, chain.lockin.lpf_slope, s.fs)?;
    let n = s.n_samples();
    let k0 = (cfg.time(cfg.run.settle) * s.fs).round() as usize;
    let dec = cfg.spectrum.decimation;
    let (mut a, mut b) = (Vec::new(), Vec::new());
    let (mut sa, mut sb, mut m) = (0.0, 0.0, 0);
    for k in 0..n {
        let x = syn.step(0.0);
        let e = nl.step(x.photocurrent).error;
        let c = cml.step(x.photocurrent);
        if k >= k0 {
            sa += e;
            sb += c;
            m += 1;
            if m == dec {
                a.push(sa / dec as f64);
                b.push(sb / dec as f64);
                (sa, sb, m) = (0.0, 0.0, 0);
            }
        }
    }
    Ok((a, b))
}

fn coherent_vs_cml(cfg: &ExperimentConfig) -> Result<Outcome> {
    let synth = cfg.synthesis()?;
    let chain = cfg.chain()?;
    let SourceMode::Coherent { pair, port } = synth.mode else {
        return Err(Error::Mode("coherent_vs_cml needs plant.mode = coherent".into()));
    };
    let dark = lock_phase(&synth.mode, LockPoint::DarkFringe)?;
    let bright = lock_phase(&synth.mode, LockPoint::BrightFringe)?;
    let fs_dec = cfg.sample_rate() / cfg.spectrum.decimation as f64;
    let seg = cfg.spectrum.segment;
    let series = [dark, bright]
        .par_iter()
        .map(|&t| held_error_series(cfg, &synth, &chain, t))
        .collect::<Result<Vec<_>>>()?;
    let spec = |x: &[f64]| welch_psd(x, fs_dec, seg, 0.5);
    let (nl_d, cml_d) = (spec(&series[0].0)?, spec(&series[0].1)?);
    let (nl_b, cml_b) = (spec(&series[1].0)?, spec(&series[1].1)?);

    let slope_opts = SweepOptions::for_chain(&chain, cfg.time(cfg.stability.slope_duration));
    let nl_slope = measure_slope(&synth, &chain, dark, cfg.stability.slope_delta, &slope_opts)?.abs();
    let c_slope = cml_slope(&pair, synth.modulation.depth);

    let (lo, hi) = (cfg.freq(cfg.spectrum.band_low), cfg.freq(cfg.spectrum.band_high));
    let nl_dark = db_band(&nl_d, lo, hi)?;
    let nl_bright = db_band(&nl_b, lo, hi)?;
    let cml_dark = db_band(&cml_d, lo, hi)?;
    let cml_bright = db_band(&cml_b, lo, hi)?;
    let ratio = nl_bright - nl_dark;
    let law_power = match chain.envelope.law {
        DetectorLaw::Amplitude => 1.0,
        DetectorLaw::Power => 2.0,
    };
    let expected = law_power * db(fringe_power(&pair, bright, port) / fringe_power(&pair, dark, port));
    let nl_phase = nl_dark - db(nl_slope * nl_slope);
    let cml_phase = cml_dark - db(c_slope * c_slope);
    let excess = nl_phase - cml_phase;

    let mut summary = Summary::new(provenance(cfg));
    summary.metric("band_low_lab_hz", cfg.spectrum.band_low);
    summary.metric("band_high_lab_hz", cfg.spectrum.band_high);
    summary.metric("nl_dark_db", nl_dark);
    summary.metric("nl_bright_db", nl_bright);
    summary.metric("cml_dark_db", cml_dark);
    summary.metric("cml_bright_db", cml_bright);
    summary.metric("nl_slope", nl_slope);
    summary.metric("cml_slope", c_slope);
    summary.metric("fringe_ratio_db", ratio);
    summary.metric("expected_fringe_ratio_db", expected);
    summary.metric("nl_phase_noise_db", nl_phase);
    summary.metric("cml_phase_noise_db", cml_phase);
    summary.metric("nl_over_cml_db", excess);
    summary.check(Check::new(
        "fringe_ratio",
        (ratio - expected).abs() <= cfg.tolerances.fringe_ratio_db,
        ratio,
        cfg.tolerances.fringe_ratio_db,
        format!("NL error-point noise, bright over dark fringe (dB), expected {expected:.2} dB"),
    ));
    summary.check(Check::new(
        "nl_cml_excess",
        excess >= cfg.tolerances.nl_cml_excess_db,
        excess,
        cfg.tolerances.nl_cml_excess_db,
        "equivalent phase noise of NL over CML at the dark fringe (dB)",
    ));

    let mut table = Table::new(
        "spectra",
        &[
            "freq_hz",
            "freq_lab_hz",
            "nl_dark_db",
            "nl_bright_db",
            "cml_dark_db",
            "cml_bright_db",
            "nl_dark_phase_db",
            "cml_dark_phase_db",
        ],
    );
    for (i, &f) in nl_d.freqs.iter().enumerate() {
        table.push(vec![
            f,
            f / cfg.scale_factor,
            db(nl_d.psd[i]),
            db(nl_b.psd[i]),
            db(cml_d.psd[i]),
            db(cml_b.psd[i]),
            db(nl_d.psd[i] / (nl_slope * nl_slope)),
            db(cml_d.psd[i] / (c_slope * c_slope)),
        ]);
    }
    let plot_series = |s: &Spectrum, norm: f64| {
        s.freqs
            .iter()
            .zip(&s.psd)
            .skip(1)
            .map(|(f, p)| (f / cfg.scale_factor, db(p / norm)))
            .collect::<Vec<_>>()
    };
    let mut out = Outcome::new(summary);
    out.plots.push(Plot {
        name: "spectra".into(),
        title: "Error-point noise as equivalent phase".into(),
        x_label: "lab frequency (Hz, log)".into(),
        y_label: "phase PSD (dB rad^2/Hz)".into(),
        series: vec![
            ("NL dark".into(), plot_series(&nl_d, nl_slope * nl_slope)),
            ("NL bright".into(), plot_series(&nl_b, nl_slope * nl_slope)),
            ("CML dark".into(), plot_series(&cml_d, c_slope * c_slope)),
            ("CML bright".into(), plot_series(&cml_b, c_slope * c_slope)),
        ],
        log_x: true,
    });
    out.tables.push(table);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_log_slope_of_a_power_law() {
        let x = [1.0, 4.0, 16.0];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powf(-0.25)).collect();
        assert!((log_log_slope(&x, &y) + 0.25).abs() < 1e-12);
    }

    #[test]
    fn circular_distance_wraps() {
        assert!((circular_distance(0.01, 2.0 * PI - 0.01, 2.0 * PI) - 0.02).abs() < 1e-12);
        assert_eq!(ordering(&[1.0, 2.0, 3.0]), 1.5);
    }

    #[test]
    fn analytic_stability_experiment_is_fast_and_passes() {
        let mut c = ExperimentConfig::default();
        c.experiment = Experiment::StabilityVsR;
        c.stability.squeeze_factors.clear();
        let out = evaluate(&c).unwrap();
        assert!(out.summary.passed());
        assert_eq!(out.tables[0].rows.len(), c.stability.r_points * c.stability.losses.len());
    }

    #[test]
    fn coherent_experiments_reject_homodyne_plants() {
        let mut c = ExperimentConfig::default();
        c.experiment = Experiment::CoherentVsCml;
        c.run.duration = 0.001;
        c.run.settle = 0.0;
        assert!(matches!(evaluate(&c), Err(Error::Mode(_))));
    }
}
