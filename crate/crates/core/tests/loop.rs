//! Cross-module checks: empirical trajectories against the recurrence
//! machinery, and the finite-class loop end to end.

use rand::Rng as _;

use sra_core::dynamics::{bound_trajectory, RecurrenceParams};
use sra_core::policy::{condition_number, Policy, PromptDistribution, TabularPolicy};
use sra_core::reward::{
    gibbs_sharpen, run_iterations, IteratePolicy, UpdateConfig, UpdateMode,
};
use sra_core::stream;

fn random_policy(n_prompts: usize, n_responses: usize, seed: u64) -> TabularPolicy {
    let mut rng = stream::root_rng(seed);
    let rows: Vec<Vec<f64>> = (0..n_prompts)
        .map(|_| {
            let raw: Vec<f64> = (0..n_responses).map(|_| rng.random::<f64>() + 0.05).collect();
            let s: f64 = raw.iter().sum();
            raw.iter().map(|v| v / s).collect()
        })
        .collect();
    TabularPolicy::from_rows(&rows).unwrap()
}

/// Empirical envelope dominance: closed-form trajectories never exceed
/// max(κ0, uniform κ) and contract geometrically toward their limit.
#[test]
fn empirical_kappa_stays_inside_the_envelope() {
    let (n_prompts, n_responses) = (6, 12);
    let mu = PromptDistribution::uniform(n_prompts);
    for seed in 0..8u64 {
        let initial = random_policy(n_prompts, n_responses, 900 + seed);
        let config = UpdateConfig {
            beta: 1.0,
            n: 1,
            rounds: 25,
            mode: UpdateMode::ExactGibbs,
            delta: 0.5,
            seed: 0,
        };
        let mut rng = stream::root_rng(seed);
        let traj = run_iterations(
            &IteratePolicy::Tabular(initial),
            &mu,
            &config,
            None,
            &mut rng,
        )
        .unwrap();
        let kappas: Vec<f64> = traj.rows.iter().map(|r| r.kappa).collect();
        let ceiling = kappas[0].max(n_responses as f64);
        let kappa_inf = *kappas.last().unwrap();
        let mut ratios = Vec::new();
        for w in kappas.windows(2) {
            assert!(w[1] <= ceiling + 1e-9);
            let d0 = (w[0] - kappa_inf).abs();
            if d0 > 1e-9 {
                ratios.push((w[1] - kappa_inf).abs() / d0);
            }
        }
        ratios.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(
            ratios[ratios.len() / 2] < 1.0,
            "measured contraction ratio must stay below 1"
        );
    }
}

/// The analytic envelope itself dominates any sequence actually generated
/// by the reduced recurrence step from the same starting point.
#[test]
fn recurrence_iterates_stay_under_bound_trajectory() {
    let params = RecurrenceParams::from_constants(2.5, 1.2, 0.4);
    for kappa_0 in [1.0f64, 4.0, 50.0, 4000.0] {
        let env = bound_trajectory(kappa_0, &params, 30);
        let mut kappa = kappa_0;
        for (t, &bound) in env.iter().enumerate() {
            if kappa_0 >= params.u {
                assert!(
                    kappa <= bound + 1e-9,
                    "iterate {kappa} above envelope {bound} at t = {t}"
                );
            }
            kappa = params.reduced_step(kappa.max(1.0));
        }
    }
}

/// A sharpening ladder is walked rung by rung by the finite-class ERM, and
/// the walk is reproducible bit for bit.
#[test]
fn erm_finite_walks_the_ladder() {
    let initial = random_policy(4, 10, 77);
    let mu = PromptDistribution::uniform(4);
    let beta = 1.0;
    let rungs = 6usize;
    let mut ladder = Vec::with_capacity(rungs + 1);
    let mut cur = initial.clone();
    ladder.push(cur.clone());
    for _ in 0..rungs {
        cur = gibbs_sharpen(&cur, beta);
        ladder.push(cur.clone());
    }
    ladder.reverse(); // sharpest first

    let config = UpdateConfig {
        beta,
        n: 400,
        rounds: 3,
        mode: UpdateMode::ErmFinite,
        delta: 0.5,
        seed: 0,
    };
    let run = || {
        let mut rng = stream::root_rng(5);
        run_iterations(
            &IteratePolicy::Tabular(initial.clone()),
            &mu,
            &config,
            Some(&ladder),
            &mut rng,
        )
        .unwrap()
    };
    let traj = run();
    assert!(traj.non_realizable_rounds.is_empty());
    // Three rounds of exact fits climb three rungs.
    let IteratePolicy::Tabular(final_policy) = &traj.final_policy else {
        panic!("tabular run");
    };
    let expected = &ladder[rungs - 3];
    for x in 0..4 {
        for (a, b) in final_policy
            .row_log_probs(x)
            .iter()
            .zip(expected.row_log_probs(x))
        {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert!(condition_number(final_policy, &mu) <= traj.rows[0].kappa);

    let again = run();
    assert_eq!(traj, again);
}
