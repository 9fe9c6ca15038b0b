//! The self-rewarding training step.
//!
//! One round, starting from the current policy π as its own reference:
//!
//! 1. sample prompts `x ~ μ` and response pairs `y, y' ~ π(·|x)`, recording
//!    the self-reward difference `Δr = log π(y|x) − log π(y'|x)`;
//! 2. fit a candidate by minimizing the square loss
//!    `(1/n) Σ (β·[log(π'(y|x)/π(y|x)) − log(π'(y'|x)/π(y'|x))] − Δr)²`;
//! 3. repeat with the minimizer as the next reference.
//!
//! The population minimizer of step 2 has a closed form — the reference
//! raised to the power `1 + 1/β` and renormalized ([`gibbs_sharpen`]) — which
//! serves as the exact oracle every learner here is tested against. Two
//! learners are provided: exhaustive ERM over a finite class
//! ([`erm_finite`]) and norm-constrained linear least squares over the
//! linear-softmax class ([`erm_linear`]), where the pairwise log-ratio
//! difference is linear in θ: `β⟨φ(x,y) − φ(x,y'), θ − θ_ref⟩`.

use nalgebra::{Cholesky, DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{
    failure_probability, sample_response, FeatureTable, LinearSoftmaxPolicy, Policy,
    PolicyDiagnostics, PromptDistribution, RowPolicy, TabularPolicy,
};

/// Finite-class ERM refuses classes beyond this size.
pub const CLASS_SIZE_LIMIT: usize = 100_000;

/// Squared-loss level at or below which a round counts as realizable: the
/// Gibbs target fits its own dataset exactly, so a class containing it
/// always reaches this.
pub const REALIZABLE_LOSS_TOL: f64 = 1e-12;

/// One self-generated training example.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreferenceTriple {
    pub x: usize,
    pub y: usize,
    pub y_prime: usize,
    /// `log π(y|x) − log π(y'|x)` under the generating policy, in nats.
    pub delta_r: f64,
}

/// Update rule applied each round.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UpdateMode {
    /// Apply the closed-form sharpening map directly; no data is drawn.
    ExactGibbs,
    /// Exhaustive ERM over a supplied finite class of tabular policies.
    ErmFinite,
    /// Norm-constrained linear least squares over the linear-softmax class.
    ErmLinear,
}

/// Round configuration. Loads from a flat JSON document with keys
/// `beta`, `n`, `T`, `mode`, `delta`, `seed`; `beta` defaults to `1/sqrt(n)`
/// and `delta` to `1/2` when absent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "UpdateConfigDoc", into = "UpdateConfigDoc")]
pub struct UpdateConfig {
    pub beta: f64,
    pub n: usize,
    pub rounds: usize,
    pub mode: UpdateMode,
    pub delta: f64,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct UpdateConfigDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    beta: Option<f64>,
    n: usize,
    #[serde(rename = "T")]
    rounds: usize,
    mode: UpdateMode,
    #[serde(default)]
    delta: Option<f64>,
    #[serde(default)]
    seed: u64,
}

impl TryFrom<UpdateConfigDoc> for UpdateConfig {
    type Error = Error;
    fn try_from(doc: UpdateConfigDoc) -> Result<Self> {
        if doc.n < 1 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: doc.n as f64,
                requirement: "n >= 1",
            });
        }
        let beta = doc.beta.unwrap_or(1.0 / (doc.n as f64).sqrt());
        let delta = doc.delta.unwrap_or(0.5);
        let config = UpdateConfig {
            beta,
            n: doc.n,
            rounds: doc.rounds,
            mode: doc.mode,
            delta,
            seed: doc.seed,
        };
        config.validate()?;
        Ok(config)
    }
}

impl From<UpdateConfig> for UpdateConfigDoc {
    fn from(c: UpdateConfig) -> Self {
        UpdateConfigDoc {
            beta: Some(c.beta),
            n: c.n,
            rounds: c.rounds,
            mode: c.mode,
            delta: Some(c.delta),
            seed: c.seed,
        }
    }
}

impl UpdateConfig {
    pub fn validate(&self) -> Result<()> {
        if self.beta.is_nan() || self.beta <= 0.0 {
            return Err(Error::InvalidParameter {
                name: "beta",
                value: self.beta,
                requirement: "beta > 0",
            });
        }
        if self.n < 1 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: self.n as f64,
                requirement: "n >= 1",
            });
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::InvalidParameter {
                name: "delta",
                value: self.delta,
                requirement: "delta in (0,1)",
            });
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Draw `n` triples: `x ~ μ`, then `y, y' ~ π(·|x)`, with `Δr` computed from
/// the generating policy. Deterministic given the stream state.
///
/// Panics if `n == 0`.
pub fn generate_dataset<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    mu: &PromptDistribution,
    n: usize,
    rng: &mut R,
) -> Vec<PreferenceTriple> {
    assert!(n >= 1, "dataset size must be at least 1");
    assert_eq!(mu.len(), policy.n_prompts());
    (0..n)
        .map(|_| {
            let x = mu.sample(rng);
            let y = sample_response(policy, x, rng);
            let y_prime = sample_response(policy, x, rng);
            PreferenceTriple {
                x,
                y,
                y_prime,
                delta_r: policy.log_prob(x, y) - policy.log_prob(x, y_prime),
            }
        })
        .collect()
}

/// Mean squared difference between the candidate's pairwise log-ratio
/// differences (scaled by β, anchored at the reference) and the stored
/// self-reward differences.
///
/// Panics if the candidate and reference disagree on the prompt or response
/// space.
pub fn dpo_loss<C: Policy + ?Sized, F: Policy + ?Sized>(
    candidate: &C,
    reference: &F,
    dataset: &[PreferenceTriple],
    beta: f64,
) -> f64 {
    assert_eq!(
        candidate.n_prompts(),
        reference.n_prompts(),
        "candidate and reference prompt spaces differ"
    );
    assert_eq!(
        candidate.n_responses(),
        reference.n_responses(),
        "candidate and reference response spaces differ"
    );
    if dataset.is_empty() {
        return 0.0;
    }
    let sum: f64 = dataset
        .iter()
        .map(|t| {
            let lhs = candidate.log_prob(t.x, t.y) - reference.log_prob(t.x, t.y);
            let rhs = candidate.log_prob(t.x, t.y_prime) - reference.log_prob(t.x, t.y_prime);
            let delta_pi = beta * (lhs - rhs);
            let r = delta_pi - t.delta_r;
            r * r
        })
        .sum();
    sum / dataset.len() as f64
}

fn sharpen_exponent(beta: f64) -> f64 {
    assert!(beta > 0.0, "beta must be positive");
    1.0 + 1.0 / beta
}

/// Exact optimizer of the KL-regularized self-reward objective: each row
/// raised to the power `1 + 1/β` and renormalized, entirely in the log
/// domain. Raises every modal probability, never changes any argmax.
pub fn gibbs_sharpen(policy: &TabularPolicy, beta: f64) -> TabularPolicy {
    let s = sharpen_exponent(beta);
    let rows: Vec<Vec<f64>> = (0..policy.n_prompts())
        .map(|x| policy.row_log_probs(x).iter().map(|&l| s * l).collect())
        .collect();
    TabularPolicy::from_logits(&rows).expect("sharpened rows stay finite")
}

/// [`gibbs_sharpen`] for row-stochastic policies with zero-mass entries;
/// zeros stay zero.
pub fn gibbs_sharpen_rows(policy: &RowPolicy, beta: f64) -> RowPolicy {
    let s = sharpen_exponent(beta);
    let n_prompts = policy.n_prompts();
    let n_responses = policy.n_responses();
    let mut log_probs = Vec::with_capacity(n_prompts * n_responses);
    for x in 0..n_prompts {
        let scaled: Vec<f64> = policy
            .row_log_probs(x)
            .iter()
            .map(|&l| {
                if l == f64::NEG_INFINITY {
                    f64::NEG_INFINITY
                } else {
                    s * l
                }
            })
            .collect();
        let z = crate::policy::log_sum_exp(&scaled);
        log_probs.extend(scaled.iter().map(|&l| l - z));
    }
    RowPolicy::from_log_rows(n_prompts, n_responses, log_probs)
}

/// Sharpening in parameter space: `θ' = (1 + 1/β)·θ`. Errors when the
/// sharpened parameter leaves the radius-`B` ball — the exact optimizer is
/// then outside the class.
pub fn gibbs_sharpen_linear(
    policy: &LinearSoftmaxPolicy,
    beta: f64,
) -> Result<LinearSoftmaxPolicy> {
    let s = sharpen_exponent(beta);
    let theta: Vec<f64> = policy.theta().iter().map(|&t| s * t).collect();
    let norm = theta.iter().map(|&t| t * t).sum::<f64>().sqrt();
    if norm > policy.radius_b() {
        return Err(Error::OutOfClass {
            norm,
            radius: policy.radius_b(),
        });
    }
    policy.with_theta(theta)
}

/// Exhaustive ERM over a finite class: evaluates [`dpo_loss`] for every
/// candidate and returns the minimizer, ties broken toward the lowest class
/// index. Candidates whose loss is NaN (off-support log ratios) never win.
pub fn erm_finite<'a, P, F>(
    class: &'a [P],
    reference: &F,
    dataset: &[PreferenceTriple],
    beta: f64,
) -> Result<(usize, &'a P)>
where
    P: Policy,
    F: Policy + ?Sized,
{
    if class.is_empty() {
        return Err(Error::EmptyClass);
    }
    if class.len() > CLASS_SIZE_LIMIT {
        return Err(Error::ClassTooLarge {
            size: class.len(),
            limit: CLASS_SIZE_LIMIT,
        });
    }
    let mut best_idx = 0usize;
    let mut best = f64::INFINITY;
    for (i, candidate) in class.iter().enumerate() {
        let loss = dpo_loss(candidate, reference, dataset, beta);
        if loss < best {
            best = loss;
            best_idx = i;
        }
    }
    Ok((best_idx, &class[best_idx]))
}

/// Constrained least squares over the linear-softmax class:
/// `min_{‖θ‖ ≤ B} (1/n) Σ (β⟨ψ_i, θ − θ_ref⟩ − Δr_i)²` with
/// `ψ_i = φ(x_i, y_i) − φ(x_i, y'_i)`.
///
/// The unconstrained step solves the normal equations with a `1e-12`
/// diagonal stabilizer, which also pins components of `θ − θ_ref` outside
/// the span of the `ψ_i` to zero (minimum-change convention). If the result
/// leaves the ball, a ridge multiplier is bisected until `‖θ(λ)‖ = B`
/// within `1e-10`.
pub fn erm_linear(
    features: &FeatureTable,
    theta_ref: &[f64],
    dataset: &[PreferenceTriple],
    beta: f64,
    radius_b: f64,
) -> Vec<f64> {
    assert!(!dataset.is_empty(), "dataset must be nonempty");
    assert!(beta > 0.0);
    let d = features.dim();
    assert_eq!(theta_ref.len(), d, "theta_ref dimension mismatch");
    let ref_norm = theta_ref.iter().map(|&t| t * t).sum::<f64>().sqrt();
    assert!(
        ref_norm <= radius_b + 1e-9,
        "reference parameter outside the class ball"
    );

    const STABILIZER: f64 = 1e-12;
    const NORM_TOL: f64 = 1e-10;

    let n = dataset.len() as f64;
    let mut gram = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for t in dataset {
        let psi = features.psi(t.x, t.y, t.y_prime);
        for i in 0..d {
            for j in 0..d {
                gram[(i, j)] += beta * beta * psi[i] * psi[j] / n;
            }
            rhs[i] += beta * t.delta_r * psi[i] / n;
        }
    }

    let solve = |lambda: f64| -> DVector<f64> {
        let mut m = gram.clone();
        for i in 0..d {
            m[(i, i)] += STABILIZER + lambda;
        }
        Cholesky::new(m)
            .expect("stabilized Gram matrix is positive definite")
            .solve(&rhs)
    };
    let theta_at = |u: &DVector<f64>| -> Vec<f64> {
        theta_ref.iter().zip(u.iter()).map(|(&t, &du)| t + du).collect()
    };
    let norm_of = |theta: &[f64]| theta.iter().map(|&t| t * t).sum::<f64>().sqrt();

    let unconstrained = theta_at(&solve(0.0));
    if norm_of(&unconstrained) <= radius_b {
        return unconstrained;
    }

    // ‖θ(λ)‖ decreases continuously toward ‖θ_ref‖ ≤ B as λ grows.
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    while norm_of(&theta_at(&solve(hi))) > radius_b {
        lo = hi;
        hi *= 2.0;
        assert!(hi < 1e60, "ridge bisection failed to bracket the ball");
    }
    let mut theta_hi = theta_at(&solve(hi));
    for _ in 0..200 {
        if radius_b - norm_of(&theta_hi) <= NORM_TOL {
            break;
        }
        let mid = 0.5 * (lo + hi);
        let theta_mid = theta_at(&solve(mid));
        if norm_of(&theta_mid) > radius_b {
            lo = mid;
        } else {
            hi = mid;
            theta_hi = theta_mid;
        }
    }
    theta_hi
}

/// Policy kinds the iteration driver can carry through rounds.
#[derive(Debug, Clone, PartialEq)]
pub enum IteratePolicy {
    Tabular(TabularPolicy),
    Linear(LinearSoftmaxPolicy),
}

impl Policy for IteratePolicy {
    fn n_prompts(&self) -> usize {
        match self {
            IteratePolicy::Tabular(p) => p.n_prompts(),
            IteratePolicy::Linear(p) => p.n_prompts(),
        }
    }
    fn n_responses(&self) -> usize {
        match self {
            IteratePolicy::Tabular(p) => p.n_responses(),
            IteratePolicy::Linear(p) => p.n_responses(),
        }
    }
    fn log_prob(&self, x: usize, y: usize) -> f64 {
        match self {
            IteratePolicy::Tabular(p) => p.log_prob(x, y),
            IteratePolicy::Linear(p) => p.log_prob(x, y),
        }
    }
    fn row_log_probs(&self, x: usize) -> Vec<f64> {
        match self {
            IteratePolicy::Tabular(p) => p.row_log_probs(x),
            IteratePolicy::Linear(p) => p.row_log_probs(x),
        }
    }
}

/// Per-round diagnostics. Row `t` describes the policy after `t` updates;
/// `dpo_train_loss` is the loss achieved by the update that produced it
/// (0 for round 0 and for closed-form rounds).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryRow {
    pub t: usize,
    pub kappa: f64,
    pub min_confidence: f64,
    pub margin: f64,
    pub failure_prob: f64,
    pub dpo_train_loss: f64,
}

/// Full record of one iterated run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub rows: Vec<TrajectoryRow>,
    /// Rounds (1-based round index = row index) whose dataset could not be
    /// fit to [`REALIZABLE_LOSS_TOL`] by anything in the class.
    pub non_realizable_rounds: Vec<usize>,
    pub final_policy: IteratePolicy,
}

impl Trajectory {
    pub fn final_row(&self) -> &TrajectoryRow {
        self.rows.last().expect("trajectory has a round-0 row")
    }
}

/// Serialize rows to the trajectory CSV schema:
/// `t,kappa,min_confidence,margin,failure_prob,dpo_train_loss`.
pub fn trajectory_to_csv(rows: &[TrajectoryRow]) -> String {
    let mut out = String::from("t,kappa,min_confidence,margin,failure_prob,dpo_train_loss\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.t, r.kappa, r.min_confidence, r.margin, r.failure_prob, r.dpo_train_loss
        ));
    }
    out
}

/// Parse the trajectory CSV schema emitted by [`trajectory_to_csv`].
pub fn trajectory_from_csv(text: &str) -> Result<Vec<TrajectoryRow>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty csv".into(),
    })?;
    if header != "t,kappa,min_confidence,margin,failure_prob,dpo_train_loss" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 6 fields, got {}", fields.len()),
            });
        }
        let parse = |i: usize| -> Result<f64> {
            fields[i].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("bad number {:?}: {e}", fields[i]),
            })
        };
        rows.push(TrajectoryRow {
            t: fields[0].parse().map_err(|e| Error::Parse {
                line: idx + 1,
                message: format!("bad round index {:?}: {e}", fields[0]),
            })?,
            kappa: parse(1)?,
            min_confidence: parse(2)?,
            margin: parse(3)?,
            failure_prob: parse(4)?,
            dpo_train_loss: parse(5)?,
        });
    }
    Ok(rows)
}

/// Run `config.rounds` self-rewarding updates from `initial`, recording
/// diagnostics per round.
///
/// Mode requirements: `erm-finite` needs a tabular initial policy and a
/// nonempty `class`; `erm-linear` needs a linear initial policy;
/// `exact-gibbs` works on both and ignores `class`. An `exact-gibbs` round
/// on a linear policy surfaces the out-of-class error when sharpening
/// leaves the radius ball.
pub fn run_iterations<R: Rng + ?Sized>(
    initial: &IteratePolicy,
    mu: &PromptDistribution,
    config: &UpdateConfig,
    class: Option<&[TabularPolicy]>,
    rng: &mut R,
) -> Result<Trajectory> {
    config.validate()?;
    assert!(
        initial.n_responses() >= 2,
        "iteration needs at least two responses"
    );
    match (config.mode, initial) {
        (UpdateMode::ErmFinite, IteratePolicy::Linear(_)) => {
            return Err(Error::InvalidParameter {
                name: "mode",
                value: 0.0,
                requirement: "erm-finite requires a tabular initial policy",
            })
        }
        (UpdateMode::ErmLinear, IteratePolicy::Tabular(_)) => {
            return Err(Error::InvalidParameter {
                name: "mode",
                value: 0.0,
                requirement: "erm-linear requires a linear-softmax initial policy",
            })
        }
        _ => {}
    }
    if config.mode == UpdateMode::ErmFinite && class.is_none_or(|c| c.is_empty()) {
        return Err(Error::EmptyClass);
    }

    let mut current = initial.clone();
    let mut rows = Vec::with_capacity(config.rounds + 1);
    let mut non_realizable = Vec::new();
    rows.push(measure_row(0, &current, mu, config.delta, 0.0)?);

    for t in 1..=config.rounds {
        let (next, train_loss) = match config.mode {
            UpdateMode::ExactGibbs => {
                let next = match &current {
                    IteratePolicy::Tabular(p) => {
                        IteratePolicy::Tabular(gibbs_sharpen(p, config.beta))
                    }
                    IteratePolicy::Linear(p) => {
                        IteratePolicy::Linear(gibbs_sharpen_linear(p, config.beta)?)
                    }
                };
                (next, 0.0)
            }
            UpdateMode::ErmFinite => {
                let class = class.expect("validated above");
                let dataset = generate_dataset(&current, mu, config.n, rng);
                let (_, winner) = erm_finite(class, &current, &dataset, config.beta)?;
                let loss = dpo_loss(winner, &current, &dataset, config.beta);
                if loss > REALIZABLE_LOSS_TOL {
                    non_realizable.push(t);
                }
                (IteratePolicy::Tabular(winner.clone()), loss)
            }
            UpdateMode::ErmLinear => {
                let IteratePolicy::Linear(p) = &current else {
                    unreachable!("validated above")
                };
                let dataset = generate_dataset(p, mu, config.n, rng);
                let theta = erm_linear(
                    p.features(),
                    p.theta(),
                    &dataset,
                    config.beta,
                    p.radius_b(),
                );
                let next = p.with_theta(theta)?;
                let loss = dpo_loss(&next, p, &dataset, config.beta);
                if loss > REALIZABLE_LOSS_TOL {
                    non_realizable.push(t);
                }
                (IteratePolicy::Linear(next), loss)
            }
        };
        current = next;
        rows.push(measure_row(t, &current, mu, config.delta, train_loss)?);
    }

    Ok(Trajectory {
        rows,
        non_realizable_rounds: non_realizable,
        final_policy: current,
    })
}

fn measure_row(
    t: usize,
    policy: &IteratePolicy,
    mu: &PromptDistribution,
    delta: f64,
    dpo_train_loss: f64,
) -> Result<TrajectoryRow> {
    let diag = PolicyDiagnostics::measure(policy, mu)?;
    Ok(TrajectoryRow {
        t,
        kappa: diag.kappa,
        min_confidence: diag.min_confidence_c,
        margin: diag.margin_gamma,
        failure_prob: failure_probability(policy, mu, delta),
        dpo_train_loss,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::{modal_response, RowPolicy};
    use crate::stream::root_rng;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn random_policy(n_prompts: usize, n_responses: usize, seed: u64) -> TabularPolicy {
        let mut rng = root_rng(seed);
        let rows: Vec<Vec<f64>> = (0..n_prompts)
            .map(|_| {
                let raw: Vec<f64> = (0..n_responses).map(|_| rng.random::<f64>() + 0.02).collect();
                let s: f64 = raw.iter().sum();
                raw.iter().map(|v| v / s).collect()
            })
            .collect();
        TabularPolicy::from_rows(&rows).unwrap()
    }

    #[test]
    fn dataset_from_deterministic_policy_is_degenerate() {
        let det = RowPolicy::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        let mu = PromptDistribution::uniform(1);
        let mut rng = root_rng(1);
        for t in generate_dataset(&det, &mu, 50, &mut rng) {
            assert_eq!(t.y, t.y_prime);
            assert_eq!(t.delta_r, 0.0);
        }
    }

    #[test]
    #[should_panic(expected = "at least 1")]
    fn dataset_size_zero_rejected() {
        let p = TabularPolicy::uniform(1, 2);
        let mu = PromptDistribution::uniform(1);
        let mut rng = root_rng(1);
        let _ = generate_dataset(&p, &mu, 0, &mut rng);
    }

    #[test]
    fn dataset_pair_disagreement_matches_binomial() {
        let p = TabularPolicy::uniform(1, 2);
        let mu = PromptDistribution::uniform(1);
        let mut rng = root_rng(17);
        let n = 100_000;
        let data = generate_dataset(&p, &mu, n, &mut rng);
        let disagree = data.iter().filter(|t| t.y != t.y_prime).count() as f64;
        let expected = n as f64 / 2.0;
        let sigma = (n as f64 * 0.25).sqrt();
        assert!((disagree - expected).abs() <= 4.0 * sigma);
    }

    #[test]
    fn dpo_loss_of_gibbs_target_is_zero() {
        let p = random_policy(3, 6, 5);
        let mu = PromptDistribution::uniform(3);
        let beta = 0.8;
        let mut rng = root_rng(2);
        let data = generate_dataset(&p, &mu, 400, &mut rng);
        let target = gibbs_sharpen(&p, beta);
        assert!(dpo_loss(&target, &p, &data, beta) < 1e-18);
    }

    #[test]
    fn dpo_loss_of_reference_is_mean_squared_delta() {
        let p = random_policy(2, 4, 9);
        let mu = PromptDistribution::uniform(2);
        let mut rng = root_rng(3);
        let data = generate_dataset(&p, &mu, 200, &mut rng);
        let expected: f64 =
            data.iter().map(|t| t.delta_r * t.delta_r).sum::<f64>() / data.len() as f64;
        assert_abs_diff_eq!(dpo_loss(&p, &p, &data, 0.7), expected, epsilon = 1e-15);
    }

    #[test]
    fn dpo_loss_degenerate_pairs_is_zero() {
        let p = random_policy(2, 4, 9);
        let data: Vec<PreferenceTriple> = (0..10)
            .map(|i| PreferenceTriple {
                x: i % 2,
                y: i % 4,
                y_prime: i % 4,
                delta_r: 0.0,
            })
            .collect();
        let candidate = random_policy(2, 4, 10);
        assert_eq!(dpo_loss(&candidate, &p, &data, 1.0), 0.0);
    }

    #[test]
    #[should_panic(expected = "response spaces differ")]
    fn dpo_loss_shape_mismatch_panics() {
        let a = TabularPolicy::uniform(1, 3);
        let b = TabularPolicy::uniform(1, 4);
        let _ = dpo_loss(&a, &b, &[], 1.0);
    }

    #[test]
    fn gibbs_sharpen_examples() {
        let uniform = TabularPolicy::uniform(2, 5);
        let sharpened = gibbs_sharpen(&uniform, 0.5);
        for (a, b) in uniform.log_probs().iter().zip(sharpened.log_probs()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-14);
        }

        let p = TabularPolicy::from_rows(&[vec![0.6, 0.4]]).unwrap();
        let s = gibbs_sharpen(&p, 1.0);
        let rows = s.to_rows();
        assert_abs_diff_eq!(rows[0][0], 0.36 / 0.52, epsilon = 1e-12);
        assert_abs_diff_eq!(rows[0][1], 0.16 / 0.52, epsilon = 1e-12);

        let nearly_identity = gibbs_sharpen(&p, 1e12);
        for (a, b) in p.to_rows()[0].iter().zip(&nearly_identity.to_rows()[0]) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn gibbs_sharpen_linear_scales_theta_or_errors() {
        let features = FeatureTable::new(1, 3, 2, vec![0.5, 0.0, 0.0, 0.5, -0.5, 0.0]).unwrap();
        let p = LinearSoftmaxPolicy::new(vec![0.3, 0.4], features.clone(), 2.0).unwrap();
        let s = gibbs_sharpen_linear(&p, 1.0).unwrap();
        assert_abs_diff_eq!(s.theta()[0], 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(s.theta()[1], 0.8, epsilon = 1e-15);

        let tight = LinearSoftmaxPolicy::new(vec![0.9, 0.9], features, 1.5).unwrap();
        assert!(matches!(
            gibbs_sharpen_linear(&tight, 1.0),
            Err(Error::OutOfClass { .. })
        ));
    }

    #[test]
    fn erm_finite_selects_gibbs_target() {
        let reference = random_policy(3, 5, 21);
        let mu = PromptDistribution::uniform(3);
        let beta = 0.5;
        let mut rng = root_rng(4);
        let data = generate_dataset(&reference, &mu, 300, &mut rng);
        let class = vec![
            random_policy(3, 5, 22),
            gibbs_sharpen(&reference, beta),
            random_policy(3, 5, 23),
        ];
        let (idx, winner) = erm_finite(&class, &reference, &data, beta).unwrap();
        assert_eq!(idx, 1);
        assert!(dpo_loss(winner, &reference, &data, beta) < 1e-18);
    }

    #[test]
    fn erm_finite_singleton_and_ties() {
        let reference = random_policy(1, 4, 30);
        let data = vec![PreferenceTriple {
            x: 0,
            y: 0,
            y_prime: 1,
            delta_r: reference.log_prob(0, 0) - reference.log_prob(0, 1),
        }];
        let solo = vec![random_policy(1, 4, 31)];
        let (idx, _) = erm_finite(&solo, &reference, &data, 1.0).unwrap();
        assert_eq!(idx, 0);

        let twin = random_policy(1, 4, 32);
        let class = vec![twin.clone(), twin];
        let (idx, _) = erm_finite(&class, &reference, &data, 1.0).unwrap();
        assert_eq!(idx, 0);
    }

    #[test]
    fn erm_finite_rejects_empty_and_oversized_classes() {
        let reference = TabularPolicy::uniform(1, 2);
        let empty: Vec<TabularPolicy> = vec![];
        assert!(matches!(
            erm_finite(&empty, &reference, &[], 1.0),
            Err(Error::EmptyClass)
        ));
        let big = vec![TabularPolicy::uniform(1, 2); CLASS_SIZE_LIMIT + 1];
        assert!(matches!(
            erm_finite(&big, &reference, &[], 1.0),
            Err(Error::ClassTooLarge { .. })
        ));
    }

    #[test]
    fn erm_linear_realizable_matches_gibbs_closed_form() {
        let mut rng = root_rng(7);
        let d = 4;
        let (n_prompts, n_responses) = (3, 6);
        let mut values = Vec::new();
        for _ in 0..n_prompts * n_responses {
            let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
            values.extend(v.iter().map(|a| a / norm));
        }
        let features = FeatureTable::new(n_prompts, n_responses, d, values).unwrap();
        let theta0: Vec<f64> = (0..d).map(|_| 0.3 * (rng.random::<f64>() - 0.5)).collect();
        let beta = 0.25;
        let policy = LinearSoftmaxPolicy::new(theta0.clone(), features.clone(), 10.0).unwrap();
        let mu = PromptDistribution::uniform(n_prompts);
        let data = generate_dataset(&policy, &mu, 500, &mut rng);

        let theta_hat = erm_linear(&features, &theta0, &data, beta, 10.0);
        let target = gibbs_sharpen_linear(&policy, beta).unwrap();
        for (a, b) in theta_hat.iter().zip(target.theta()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn erm_linear_degenerate_design_returns_reference() {
        let features = FeatureTable::new(1, 2, 2, vec![0.4, 0.1, 0.4, 0.1]).unwrap();
        // phi identical for both responses: every psi is zero.
        let data = vec![PreferenceTriple {
            x: 0,
            y: 0,
            y_prime: 1,
            delta_r: 0.0,
        }];
        let theta_ref = vec![0.2, -0.3];
        let theta = erm_linear(&features, &theta_ref, &data, 1.0, 5.0);
        assert_abs_diff_eq!(theta[0], 0.2, epsilon = 1e-9);
        assert_abs_diff_eq!(theta[1], -0.3, epsilon = 1e-9);
    }

    #[test]
    fn erm_linear_binding_constraint_lands_on_sphere() {
        let mut rng = root_rng(8);
        let d = 3;
        let mut values = Vec::new();
        for _ in 0..2 * 4 {
            let v: Vec<f64> = (0..d).map(|_| rng.random::<f64>() - 0.5).collect();
            let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1.0);
            values.extend(v.iter().map(|a| a / norm));
        }
        let features = FeatureTable::new(2, 4, d, values).unwrap();
        let theta0 = vec![0.5, -0.2, 0.1];
        let policy = LinearSoftmaxPolicy::new(theta0.clone(), features.clone(), 1.0).unwrap();
        let mu = PromptDistribution::uniform(2);
        let data = generate_dataset(&policy, &mu, 300, &mut rng);
        // beta small: the unconstrained solution (1 + 1/beta) theta0 has norm
        // far beyond B = 1, so the constraint binds.
        let theta = erm_linear(&features, &theta0, &data, 0.05, 1.0);
        let norm = theta.iter().map(|&t| t * t).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() <= 1e-10, "returned norm {norm}");
    }

    #[test]
    fn run_iterations_zero_rounds_records_initial_only() {
        let p = IteratePolicy::Tabular(random_policy(4, 6, 40));
        let mu = PromptDistribution::uniform(4);
        let config = UpdateConfig {
            beta: 1.0,
            n: 10,
            rounds: 0,
            mode: UpdateMode::ExactGibbs,
            delta: 0.5,
            seed: 0,
        };
        let mut rng = root_rng(0);
        let traj = run_iterations(&p, &mu, &config, None, &mut rng).unwrap();
        assert_eq!(traj.rows.len(), 1);
        assert_eq!(traj.rows[0].t, 0);
        assert_eq!(traj.rows[0].dpo_train_loss, 0.0);
    }

    #[test]
    fn run_iterations_exact_gibbs_fixes_uniform() {
        let m = 7;
        let p = IteratePolicy::Tabular(TabularPolicy::uniform(3, m));
        let mu = PromptDistribution::uniform(3);
        let config = UpdateConfig {
            beta: 0.5,
            n: 10,
            rounds: 6,
            mode: UpdateMode::ExactGibbs,
            delta: 0.5,
            seed: 0,
        };
        let mut rng = root_rng(0);
        let traj = run_iterations(&p, &mu, &config, None, &mut rng).unwrap();
        for row in &traj.rows {
            assert_abs_diff_eq!(row.kappa, m as f64, epsilon = 1e-9);
        }
    }

    #[test]
    fn run_iterations_exact_gibbs_kappa_nonincreasing() {
        for seed in 0..5u64 {
            let p = random_policy(5, 9, 100 + seed);
            let mu = PromptDistribution::uniform(5);
            let config = UpdateConfig {
                beta: 1.0,
                n: 10,
                rounds: 15,
                mode: UpdateMode::ExactGibbs,
                delta: 0.5,
                seed: 0,
            };
            let mut rng = root_rng(seed);
            let traj = run_iterations(
                &IteratePolicy::Tabular(p.clone()),
                &mu,
                &config,
                None,
                &mut rng,
            )
            .unwrap();
            // Independent recomputation of kappa per round from raw
            // probabilities, following the brute-force definition.
            let mut current = p;
            for (t, row) in traj.rows.iter().enumerate() {
                let brute: f64 = (0..5)
                    .map(|x| {
                        let probs: Vec<f64> =
                            current.row_log_probs(x).iter().map(|l| l.exp()).collect();
                        let max = probs.iter().cloned().fold(0.0, f64::max);
                        mu.weight(x) / max
                    })
                    .sum();
                assert_abs_diff_eq!(row.kappa, brute, epsilon = 1e-9);
                if t + 1 < traj.rows.len() {
                    assert!(traj.rows[t + 1].kappa <= row.kappa + 1e-12);
                    current = gibbs_sharpen(&current, config.beta);
                }
            }
        }
    }

    #[test]
    fn trajectories_are_deterministic_given_seed() {
        let p = IteratePolicy::Tabular(random_policy(4, 8, 55));
        let mu = PromptDistribution::uniform(4);
        let class: Vec<TabularPolicy> = (0..=6)
            .rev()
            .map(|k| {
                let mut policy = random_policy(4, 8, 55);
                for _ in 0..k {
                    policy = gibbs_sharpen(&policy, 1.0);
                }
                policy
            })
            .collect();
        let config = UpdateConfig {
            beta: 1.0,
            n: 200,
            rounds: 3,
            mode: UpdateMode::ErmFinite,
            delta: 0.5,
            seed: 0,
        };
        let run = || {
            let mut rng = root_rng(99);
            run_iterations(&p, &mu, &config, Some(&class), &mut rng).unwrap()
        };
        let a = run();
        let b = run();
        assert_eq!(a, b);
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            assert_eq!(ra.kappa.to_bits(), rb.kappa.to_bits());
        }
    }

    #[test]
    fn sharpening_monotonicity_property() {
        proptest!(|(raw in proptest::collection::vec(0.01f64..1.0, 6), beta in 0.1f64..10.0)| {
            let s: f64 = raw.iter().sum();
            let row: Vec<f64> = raw.iter().map(|v| v / s).collect();
            let p = TabularPolicy::from_rows(&[row]).unwrap();
            let sharp = gibbs_sharpen(&p, beta);
            let before = p.to_rows()[0].iter().cloned().fold(0.0, f64::max);
            let after = sharp.to_rows()[0].iter().cloned().fold(0.0, f64::max);
            prop_assert!(after >= before - 1e-12);
            prop_assert_eq!(modal_response(&p, 0), modal_response(&sharp, 0));
            let mu = PromptDistribution::uniform(1);
            prop_assert!(
                condition_number(&sharp, &mu) <= condition_number(&p, &mu) + 1e-9
            );
        });
    }

    #[test]
    fn update_config_json_defaults() {
        let c = UpdateConfig::from_json(r#"{"n": 400, "T": 5, "mode": "erm-finite"}"#).unwrap();
        assert_abs_diff_eq!(c.beta, 1.0 / 20.0, epsilon = 1e-15);
        assert_eq!(c.delta, 0.5);
        assert_eq!(c.rounds, 5);
        assert_eq!(c.seed, 0);

        let explicit = UpdateConfig::from_json(
            r#"{"beta": 0.3, "n": 10, "T": 2, "mode": "exact-gibbs", "delta": 0.25, "seed": 7}"#,
        )
        .unwrap();
        assert_eq!(explicit.beta, 0.3);
        assert_eq!(explicit.delta, 0.25);
        assert_eq!(explicit.seed, 7);

        assert!(UpdateConfig::from_json(r#"{"n": 0, "T": 1, "mode": "exact-gibbs"}"#).is_err());
    }

    #[test]
    fn trajectory_csv_round_trips_bytes() {
        let p = IteratePolicy::Tabular(random_policy(3, 5, 77));
        let mu = PromptDistribution::uniform(3);
        let config = UpdateConfig {
            beta: 1.0,
            n: 10,
            rounds: 4,
            mode: UpdateMode::ExactGibbs,
            delta: 0.5,
            seed: 0,
        };
        let mut rng = root_rng(1);
        let traj = run_iterations(&p, &mu, &config, None, &mut rng).unwrap();
        let csv = trajectory_to_csv(&traj.rows);
        let parsed = trajectory_from_csv(&csv).unwrap();
        assert_eq!(trajectory_to_csv(&parsed), csv);
    }
}
