//! Monte Carlo evaluation over paired bridged/free simulated tracks.

use std::io::Write;

use rayon::prelude::*;

use crate::config::RunConfig;
use crate::error::Result;
use crate::intent::IntentReport;
use crate::pipeline::run_track;
use crate::sim::simulate;

pub const EVAL_HEADER: &str =
    "noise_std,trials,detection_rate,mean_latency,accuracy_returning,accuracy_not_returning,accuracy,t_err_50,t_err_75,t_err_100";

/// Metrics for one noise level.
#[derive(Clone, Debug, PartialEq)]
pub struct EvalRow {
    pub noise_std: f64,
    pub trials: usize,
    /// Fraction of bridged runs that are eventually detected.
    pub detection_rate: f64,
    /// Mean detection latency over bridged runs (s after the first fix).
    /// Runs never detected count as the full track duration.
    pub mean_latency: f64,
    /// Final MAP classification accuracy on bridged runs.
    pub accuracy_returning: f64,
    /// Final MAP classification accuracy on free runs.
    pub accuracy_not_returning: f64,
    pub accuracy: f64,
    /// Mean `|T_map - T_true|` at 50%, 75% and 100% of the track.
    pub t_err: [f64; 3],
}

/// First time, relative to the first report, from which `p_return` stays
/// strictly above `gamma` until the end of the track.
pub fn detection_latency(reports: &[IntentReport], gamma: f64) -> Option<f64> {
    let t0 = reports.first()?.t;
    let tail = reports.iter().rev().take_while(|r| r.p_return > gamma).count();
    (tail > 0).then(|| reports[reports.len() - tail].t - t0)
}

/// Last report at or before `t`.
pub fn report_at(reports: &[IntentReport], t: f64) -> Option<&IntentReport> {
    reports.iter().take_while(|r| r.t <= t).last()
}

struct Trial {
    latency: Option<f64>,
    bridged_ok: bool,
    free_ok: bool,
    t_err: [f64; 3],
}

/// Evaluate `trials` paired runs at one observation noise level. A zero
/// level simulates noiseless fixes while the filter keeps the configured
/// noise std, since it needs a positive definite observation covariance.
pub fn evaluate_level(cfg: &RunConfig, noise_std: f64, trials: usize, seed: u64) -> Result<EvalRow> {
    let mut run_cfg = cfg.clone();
    if noise_std > 0.0 {
        run_cfg.observation_noise_std = noise_std;
    }
    run_cfg.validate()?;
    let model = run_cfg.model()?;
    let obs = run_cfg.observation(&model)?;
    let dest = run_cfg.destination(&model)?;
    let settings = run_cfg.engine_settings();
    let sim = &run_cfg.simulation;

    let run = |i: usize| -> Result<Trial> {
        let base = seed.wrapping_add(2 * i as u64);
        let bridged_sc = run_cfg.scenario(&model, true, noise_std, base)?;
        let (track, truth) = simulate(&bridged_sc)?;
        let reports = run_track(&model, &obs, &dest, &track, &settings)?;
        let t0 = track[0].t;
        let t_true = truth.arrival.expect("bridged track has an arrival");
        let mut t_err = [0.0; 3];
        for (slot, frac) in t_err.iter_mut().zip([0.5, 0.75, 1.0]) {
            // Ends of jittered tracks sit on the nominal grid, so the last
            // report always qualifies.
            let r = report_at(&reports, t0 + frac * sim.duration + 1e-9).expect("track has a first fix");
            *slot = (r.t_map - t_true).abs();
        }
        let latency = detection_latency(&reports, run_cfg.gamma);
        let bridged_ok = reports.last().is_some_and(|r| r.p_return > r.p_not);

        let free_sc = run_cfg.scenario(&model, false, noise_std, base + 1)?;
        let (track, _) = simulate(&free_sc)?;
        let reports = run_track(&model, &obs, &dest, &track, &settings)?;
        let free_ok = reports.last().is_some_and(|r| r.p_not > r.p_return);
        Ok(Trial { latency, bridged_ok, free_ok, t_err })
    };
    let results: Vec<Trial> = if run_cfg.parallel {
        (0..trials).into_par_iter().map(run).collect::<Result<_>>()?
    } else {
        (0..trials).map(run).collect::<Result<_>>()?
    };

    let n = trials as f64;
    let frac = |f: &dyn Fn(&Trial) -> bool| results.iter().filter(|t| f(t)).count() as f64 / n;
    let accuracy_returning = frac(&|t| t.bridged_ok);
    let accuracy_not_returning = frac(&|t| t.free_ok);
    let mut t_err = [0.0; 3];
    for (j, slot) in t_err.iter_mut().enumerate() {
        *slot = results.iter().map(|t| t.t_err[j]).sum::<f64>() / n;
    }
    Ok(EvalRow {
        noise_std,
        trials,
        detection_rate: frac(&|t| t.latency.is_some()),
        mean_latency: results.iter().map(|t| t.latency.unwrap_or(sim.duration)).sum::<f64>() / n,
        accuracy_returning,
        accuracy_not_returning,
        accuracy: 0.5 * (accuracy_returning + accuracy_not_returning),
        t_err,
    })
}

/// One row per configured noise level.
pub fn run_eval(cfg: &RunConfig, trials: usize, seed: u64) -> Result<Vec<EvalRow>> {
    cfg.evaluation.noise_levels.iter().map(|&noise| evaluate_level(cfg, noise, trials, seed)).collect()
}

pub fn write_eval_csv<W: Write>(rows: &[EvalRow], mut out: W) -> Result<()> {
    writeln!(out, "{EVAL_HEADER}")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.noise_std,
            r.trials,
            r.detection_rate,
            r.mean_latency,
            r.accuracy_returning,
            r.accuracy_not_returning,
            r.accuracy,
            r.t_err[0],
            r.t_err[1],
            r.t_err[2]
        )?;
    }
    out.flush()?;
    Ok(())
}
