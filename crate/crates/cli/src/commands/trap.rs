//! `trap`: construct and verify trap policies over a parameter grid.
//!
//! Each grid point gets a JSON entry: either the three-assertion report or
//! a construction-error row. The command exits nonzero iff a constructed
//! trap fails an assertion.

use std::time::Instant;

use serde::Serialize;

use sra_core::adversarial::{build_trap_policy, verify_greedy_failure, TrapReport};

use crate::config::TrapConfig;
use crate::{manifest, CommandOutcome, RunContext};

#[derive(Serialize)]
#[serde(untagged)]
enum GridEntry {
    Report(TrapReport),
    ConstructionError {
        p_star: f64,
        epsilon: f64,
        #[serde(rename = "H")]
        horizon: usize,
        #[serde(rename = "V")]
        vocab_size: usize,
        error: String,
    },
}

pub fn run_trap(config: &TrapConfig, ctx: &RunContext) -> anyhow::Result<CommandOutcome> {
    let started = Instant::now();
    config.validate()?;

    let mut entries = Vec::new();
    let mut failures = 0usize;
    let mut reports = 0usize;
    for &p_star in &config.p_star_grid {
        for &factor in &config.epsilon_factors {
            let epsilon = factor * (p_star / 2.0).min(1.0 - 2.0 * p_star);
            for &horizon in &config.h_grid {
                for &vocab_size in &config.v_grid {
                    match build_trap_policy(p_star, epsilon, horizon, vocab_size) {
                        Ok(trap) => {
                            let report = verify_greedy_failure(&trap);
                            reports += 1;
                            if !report.all_pass() {
                                failures += 1;
                                eprintln!(
                                    "trap FAILED assertions {:?} at p*={p_star}, eps={epsilon}, H={horizon}, V={vocab_size}",
                                    report.assertions
                                );
                            }
                            entries.push(GridEntry::Report(report));
                        }
                        Err(err) => entries.push(GridEntry::ConstructionError {
                            p_star,
                            epsilon,
                            horizon,
                            vocab_size,
                            error: err.to_string(),
                        }),
                    }
                }
            }
        }
    }

    manifest::emit(
        ctx,
        started,
        &[("reports.json", serde_json::to_string_pretty(&entries)?)],
    )?;
    eprintln!(
        "trap: {} grid points, {} verified, {} assertion failures",
        entries.len(),
        reports,
        failures
    );
    Ok(CommandOutcome {
        assertions_failed: failures > 0,
    })
}
