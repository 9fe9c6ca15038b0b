//! Seeded generators for experiment inputs.

use rand::Rng;
use rand_distr::StandardNormal;

use sra_core::policy::{FeatureTable, LinearSoftmaxPolicy, TabularPolicy};
use sra_core::reward::gibbs_sharpen;
use sra_core::Result;

/// Tabular policy with rows `softmax(sharpness · z)`, `z` standard normal.
/// Small sharpness gives near-uniform (ill-conditioned) rows.
pub fn random_tabular<R: Rng + ?Sized>(
    n_prompts: usize,
    n_responses: usize,
    sharpness: f64,
    rng: &mut R,
) -> TabularPolicy {
    let rows: Vec<Vec<f64>> = (0..n_prompts)
        .map(|_| {
            (0..n_responses)
                .map(|_| sharpness * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    TabularPolicy::from_logits(&rows).expect("finite logits")
}

/// Random feature table with every `φ(x,y)` scaled into the unit ball.
pub fn random_features<R: Rng + ?Sized>(
    n_prompts: usize,
    n_responses: usize,
    dim: usize,
    rng: &mut R,
) -> FeatureTable {
    let mut values = Vec::with_capacity(n_prompts * n_responses * dim);
    for _ in 0..n_prompts * n_responses {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        let scale = if norm > 1.0 { 1.0 / norm } else { 1.0 };
        values.extend(v.iter().map(|a| a * scale));
    }
    FeatureTable::new(n_prompts, n_responses, dim, values).expect("vectors scaled into the ball")
}

/// Linear-softmax policy with a random parameter of norm `theta_norm`.
pub fn random_linear<R: Rng + ?Sized>(
    n_prompts: usize,
    n_responses: usize,
    dim: usize,
    theta_norm: f64,
    radius_b: f64,
    rng: &mut R,
) -> Result<LinearSoftmaxPolicy> {
    let features = random_features(n_prompts, n_responses, dim, rng);
    let raw: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let norm = raw.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
    let theta: Vec<f64> = raw.iter().map(|a| a * theta_norm / norm).collect();
    LinearSoftmaxPolicy::new(theta, features, radius_b)
}

/// The Gibbs ladder of `initial`: rungs `sharpen^k(initial)` for
/// `k = rungs..=0`, sharpest first. Ordering matters for ERM tie-breaking:
/// when a round's dataset is uninformative (every candidate fits it
/// exactly), the lowest class index wins, and sharpest-first makes that the
/// stationary top rung instead of bouncing back to the diffuse end.
pub fn gibbs_ladder(initial: &TabularPolicy, beta: f64, rungs: usize) -> Vec<TabularPolicy> {
    let mut ladder = Vec::with_capacity(rungs + 1);
    let mut current = initial.clone();
    ladder.push(current.clone());
    for _ in 0..rungs {
        current = gibbs_sharpen(&current, beta);
        ladder.push(current.clone());
    }
    ladder.reverse();
    ladder
}
