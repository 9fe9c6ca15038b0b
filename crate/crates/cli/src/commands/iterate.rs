//! `iterate`: run the self-rewarding loop and overlay the theory envelope.
//!
//! Emits `trajectory.csv` (per-round diagnostics), `theory.csv` (envelope
//! curves evaluated at the run's measured round-0 diagnostics), `plot.txt`,
//! and the manifest.

use std::time::Instant;

use anyhow::{bail, Context};

use sra_core::dynamics::{theory_curve_csv, Complexity, TheoryInputs};
use sra_core::policy::{LinearSoftmaxPolicy, Policy, PromptDistribution, TabularPolicy};
use sra_core::reward::{run_iterations, trajectory_to_csv, IteratePolicy, UpdateMode};
use sra_core::stream;

use crate::config::{ClassSpec, IterateConfig, MuSpec, PolicySpec};
use crate::gen;
use crate::{manifest, plot, CommandOutcome, RunContext};

/// Envelope inputs need strictly positive c and γ; measured diagnostics can
/// sit at 0 (ties) or 1, so they are nudged inside the open domain.
fn clamp_unit_open(v: f64) -> f64 {
    v.clamp(1e-9, 1.0 - 1e-12)
}

pub fn run_iterate(config: &IterateConfig, ctx: &RunContext) -> anyhow::Result<CommandOutcome> {
    let started = Instant::now();
    let mut rng = stream::root_rng(ctx.seed);

    let initial = match &config.policy {
        PolicySpec::TabularRandom {
            n_prompts,
            n_responses,
            sharpness,
        } => IteratePolicy::Tabular(gen::random_tabular(
            *n_prompts,
            *n_responses,
            *sharpness,
            &mut rng,
        )),
        PolicySpec::TabularFile { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read policy {}", path.display()))?;
            IteratePolicy::Tabular(TabularPolicy::from_text(&text)?)
        }
        PolicySpec::LinearRandom {
            n_prompts,
            n_responses,
            dim,
            theta_norm,
            radius_b,
        } => IteratePolicy::Linear(gen::random_linear(
            *n_prompts,
            *n_responses,
            *dim,
            *theta_norm,
            *radius_b,
            &mut rng,
        )?),
        PolicySpec::LinearFile { path } => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read policy {}", path.display()))?;
            IteratePolicy::Linear(LinearSoftmaxPolicy::from_json(&text)?)
        }
    };

    let mu = match &config.mu {
        MuSpec::Uniform => PromptDistribution::uniform(initial.n_prompts()),
        MuSpec::Weights { weights } => PromptDistribution::new(weights.clone())?,
    };

    let class = match (&config.class, config.update.mode) {
        (Some(ClassSpec::GibbsLadder { rungs }), UpdateMode::ErmFinite) => {
            let IteratePolicy::Tabular(p) = &initial else {
                bail!("erm-finite requires a tabular initial policy");
            };
            Some(gen::gibbs_ladder(p, config.update.beta, *rungs))
        }
        (None, UpdateMode::ErmFinite) => bail!("erm-finite requires a class"),
        (Some(_), _) => {
            eprintln!("note: class ignored in mode {:?}", config.update.mode);
            None
        }
        (None, _) => None,
    };

    let trajectory = run_iterations(&initial, &mu, &config.update, class.as_deref(), &mut rng)?;
    if !trajectory.non_realizable_rounds.is_empty() {
        eprintln!(
            "warning: rounds {:?} were not realizable to tolerance",
            trajectory.non_realizable_rounds
        );
    }

    // Theory overlay at the measured starting point.
    let round0 = &trajectory.rows[0];
    let complexity = match (&initial, class.as_ref()) {
        (IteratePolicy::Linear(p), _) => Complexity::Linear {
            d: p.features().dim(),
            b: p.radius_b(),
        },
        (IteratePolicy::Tabular(_), Some(c)) => Complexity::Finite {
            log_class_size: (c.len() as f64).ln(),
        },
        (IteratePolicy::Tabular(_), None) => Complexity::Finite { log_class_size: 0.0 },
    };
    let inputs = TheoryInputs {
        c: clamp_unit_open(round0.min_confidence),
        gamma: round0.margin.max(1e-9),
        delta: config.update.delta,
        rho: config.rho,
        n: config.update.n,
        beta: config.update.beta,
        complexity,
    };
    let theory = theory_curve_csv(&inputs, round0.kappa, config.update.rounds)?;

    manifest::emit(
        ctx,
        started,
        &[
            ("trajectory.csv", trajectory_to_csv(&trajectory.rows)),
            ("theory.csv", theory),
            ("plot.txt", plot::iterate_script()),
        ],
    )?;
    eprintln!(
        "iterate: {} rounds, kappa {} -> {}",
        config.update.rounds,
        round0.kappa,
        trajectory.final_row().kappa
    );
    Ok(CommandOutcome::ok())
}
