//! `spectral`: effective-dimension curves against the regime bound, with a
//! dominance report and an optional `d_eff(1/n) ~ a·log n + b` fit.
//!
//! Emits `curve.csv`, `dominance.json`, `plot.txt`, and the manifest. Exits
//! nonzero iff the bound fails to dominate anywhere on the grid.

use std::time::Instant;

use anyhow::Context;
use serde::Serialize;

use sra_core::fit::linear_fit;
use sra_core::spectral::{curve_to_csv, effective_dimension, regime_bound, Spectrum};

use crate::config::{SpectralConfig, SpectrumSource};
use crate::{manifest, plot, CommandOutcome, RunContext};

#[derive(Serialize)]
struct DominanceReport {
    grid_points: usize,
    violations: Vec<Violation>,
    /// max over the grid of d_eff / bound.
    max_ratio: f64,
    log_fit: Option<LogFit>,
}

#[derive(Serialize)]
struct Violation {
    lambda: f64,
    d_eff: f64,
    bound: f64,
}

#[derive(Serialize)]
struct LogFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    n_grid: Vec<usize>,
}

pub fn run_spectral(config: &SpectralConfig, ctx: &RunContext) -> anyhow::Result<CommandOutcome> {
    let started = Instant::now();
    config.regime.validate()?;

    let spectrum = match &config.source {
        SpectrumSource::Saturating { d } => config.regime.saturating_spectrum(*d)?,
        SpectrumSource::File { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read spectrum {}", path.display()))?;
            Spectrum::from_text(&text)?
        }
    };

    let lambdas = config.lambda_grid.values()?;
    let mut rows = Vec::with_capacity(lambdas.len());
    let mut violations = Vec::new();
    let mut max_ratio = 0.0f64;
    for &lambda in &lambdas {
        let d_eff = effective_dimension(&spectrum, lambda);
        let bound = regime_bound(&config.regime, lambda);
        if bound > 0.0 {
            max_ratio = max_ratio.max(d_eff / bound);
        }
        if d_eff > bound + 1e-9 {
            violations.push(Violation {
                lambda,
                d_eff,
                bound,
            });
        }
        rows.push((lambda, d_eff, bound));
    }

    let log_fit = match &config.fit_n_grid {
        Some(n_grid) if n_grid.len() >= 2 => {
            let xs: Vec<f64> = n_grid.iter().map(|&n| (n as f64).ln()).collect();
            let ys: Vec<f64> = n_grid
                .iter()
                .map(|&n| effective_dimension(&spectrum, 1.0 / n as f64))
                .collect();
            linear_fit(&xs, &ys).map(|f| LogFit {
                slope: f.slope,
                intercept: f.intercept,
                r_squared: f.r_squared,
                n_grid: n_grid.clone(),
            })
        }
        _ => None,
    };

    let report = DominanceReport {
        grid_points: lambdas.len(),
        max_ratio,
        log_fit,
        violations,
    };
    let failed = !report.violations.is_empty();

    manifest::emit(
        ctx,
        started,
        &[
            ("curve.csv", curve_to_csv(&rows)),
            ("dominance.json", serde_json::to_string_pretty(&report)?),
            ("plot.txt", plot::spectral_script()),
        ],
    )?;
    eprintln!(
        "spectral: {} grid points, {} violations, max d_eff/bound = {:.4}",
        report.grid_points,
        report.violations.len(),
        report.max_ratio
    );
    Ok(CommandOutcome {
        assertions_failed: failed,
    })
}
