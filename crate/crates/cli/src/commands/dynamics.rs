//! `dynamics`: evaluate the recurrence machinery at explicit inputs.
//!
//! Emits `theory.csv` (envelope curves), `params.json` (the derived
//! constants), `plot.txt`, and the manifest.

use std::time::Instant;

use sra_core::dynamics::{recurrence_params, theory_curve_csv};

use crate::config::DynamicsConfig;
use crate::{manifest, plot, CommandOutcome, RunContext};

pub fn run_dynamics(config: &DynamicsConfig, ctx: &RunContext) -> anyhow::Result<CommandOutcome> {
    let started = Instant::now();
    let params = recurrence_params(&config.inputs)?;
    let curve = theory_curve_csv(&config.inputs, config.kappa0, config.rounds)?;
    manifest::emit(
        ctx,
        started,
        &[
            ("theory.csv", curve),
            ("params.json", serde_json::to_string_pretty(&params)?),
            ("plot.txt", plot::dynamics_script()),
        ],
    )?;
    eprintln!(
        "dynamics: U = {:.6}, q = {:.6} over {} rounds",
        params.u, params.q, config.rounds
    );
    Ok(CommandOutcome::ok())
}
