//! `hard-instance`: failure-rate sweep over the sample budget, plus the
//! fitted log-log slope with its confidence interval.
//!
//! Emits `sweep.csv`, `fit.json`, `plot.txt`, and the manifest.

use std::time::Instant;

use serde::Serialize;

use sra_core::adversarial::{failure_rate_sweep, fit_failure_slope, sweep_to_csv, HardInstanceParams};

use crate::config::HardInstanceConfig;
use crate::{manifest, plot, CommandOutcome, RunContext};

#[derive(Serialize)]
struct FitReport {
    /// Log-log slope of failure rate vs n over points with positive rate;
    /// null when fewer than two such points exist.
    slope: Option<f64>,
    slope_stderr: Option<f64>,
    ci95_low: Option<f64>,
    ci95_high: Option<f64>,
    r_squared: Option<f64>,
    points_used: usize,
    points_total: usize,
}

pub fn run_hard_instance(
    config: &HardInstanceConfig,
    ctx: &RunContext,
) -> anyhow::Result<CommandOutcome> {
    let started = Instant::now();
    config.validate()?;
    let params = HardInstanceParams {
        d: config.d,
        m: config.m,
        delta: config.delta,
    };
    let points = failure_rate_sweep(
        &params,
        &config.learner,
        &config.n_grid,
        config.beta,
        config.trials,
        ctx.seed,
    )?;

    let fit = fit_failure_slope(&points);
    let report = FitReport {
        slope: fit.map(|f| f.slope),
        slope_stderr: fit.map(|f| f.slope_stderr),
        ci95_low: fit.map(|f| f.slope - 1.96 * f.slope_stderr),
        ci95_high: fit.map(|f| f.slope + 1.96 * f.slope_stderr),
        r_squared: fit.map(|f| f.r_squared),
        points_used: fit.map(|f| f.points).unwrap_or(0),
        points_total: points.len(),
    };

    manifest::emit(
        ctx,
        started,
        &[
            ("sweep.csv", sweep_to_csv(&points)),
            ("fit.json", serde_json::to_string_pretty(&report)?),
            ("plot.txt", plot::hard_instance_script()),
        ],
    )?;
    match fit {
        Some(f) => eprintln!(
            "hard-instance: slope {:.4} +- {:.4} over {} positive points",
            f.slope, f.slope_stderr, f.points
        ),
        None => eprintln!(
            "hard-instance: slope undefined ({} of {} points have positive rate)",
            points.iter().filter(|p| p.failure_rate > 0.0).count(),
            points.len()
        ),
    }
    Ok(CommandOutcome::ok())
}
