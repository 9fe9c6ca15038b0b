//! Finite-space policies and the diagnostics the theory is stated in terms of.
//!
//! A policy is a conditional distribution over a finite response set, one row
//! per prompt. Three quantities drive everything downstream:
//!
//! - the condition number `κ = E_{x~μ}[1 / π(y*(x)|x)]`, the expected inverse
//!   probability of the policy's own most likely response;
//! - the minimum confidence `c = min_x π(y*(x)|x)`;
//! - the margin `γ = min_x log(π(y*(x)|x) / max_{y'≠y*} π(y'|x))`.
//!
//! All probabilities live in the log domain; conversions exponentiate only at
//! the boundary. Argmax ties break toward the lowest response index so that
//! every operation is deterministic.

mod autoreg;
mod linear;
mod tabular;

pub use autoreg::{
    condition_number_monte_carlo, failure_probability_monte_carlo, greedy_decode,
    AutoregressivePolicy,
};
pub use linear::{FeatureTable, LinearSoftmaxPolicy};
pub use tabular::{RowPolicy, TabularPolicy};

use rand::Rng;

use crate::error::{Error, Result};

/// Tolerance for "this vector of probabilities sums to one".
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Log-sum-exp over a slice, tolerating `-inf` entries (zero mass).
pub(crate) fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

/// Index of the maximum entry, ties broken toward the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Validate that `probs` is a distribution: entries `>= 0`, sum within
/// [`NORMALIZATION_TOL`] of one. `row` is only used for error reporting.
pub(crate) fn check_distribution(probs: &[f64], row: usize) -> Result<()> {
    for (col, &p) in probs.iter().enumerate() {
        if p.is_nan() || p < 0.0 {
            return Err(Error::NegativeProbability { row, col, value: p });
        }
    }
    let sum: f64 = probs.iter().sum();
    if (sum - 1.0).abs() > NORMALIZATION_TOL {
        return Err(Error::NotNormalized {
            sum,
            tolerance: NORMALIZATION_TOL,
        });
    }
    Ok(())
}

/// Draw an index from `probs` by inverse CDF over the ordered index set.
pub(crate) fn sample_from_probs<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // Rounding can leave acc marginally below 1; attribute the sliver to the
    // last index with positive mass.
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Distribution μ over the finite prompt set, prompts identified by index.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptDistribution {
    weights: Vec<f64>,
}

impl PromptDistribution {
    /// Build from explicit weights; they must be nonnegative and sum to one
    /// within `1e-12`.
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter {
                name: "n_prompts",
                value: 0.0,
                requirement: "at least one prompt",
            });
        }
        check_distribution(&weights, 0)?;
        Ok(Self { weights })
    }

    /// Uniform distribution over `n` prompts.
    pub fn uniform(n: usize) -> Self {
        assert!(n > 0, "prompt set must be nonempty");
        Self {
            weights: vec![1.0 / n as f64; n],
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights[x]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Draw a prompt by inverse CDF; deterministic given the stream state.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_from_probs(&self.weights, rng)
    }
}

/// Conditional distribution over a finite response set, one row per prompt.
///
/// `log_prob` may return `-inf` for zero-mass responses on types that allow
/// them ([`RowPolicy`], [`AutoregressivePolicy`] conditionals); the strictly
/// positive types ([`TabularPolicy`], [`LinearSoftmaxPolicy`]) always return
/// finite values. Out-of-range indices panic, as with slice indexing.
pub trait Policy {
    fn n_prompts(&self) -> usize;
    fn n_responses(&self) -> usize;

    /// `log π(y|x)` in nats.
    fn log_prob(&self, x: usize, y: usize) -> f64;

    /// The whole row `log π(·|x)`.
    fn row_log_probs(&self, x: usize) -> Vec<f64> {
        (0..self.n_responses()).map(|y| self.log_prob(x, y)).collect()
    }
}

impl<P: Policy + ?Sized> Policy for &P {
    fn n_prompts(&self) -> usize {
        (**self).n_prompts()
    }
    fn n_responses(&self) -> usize {
        (**self).n_responses()
    }
    fn log_prob(&self, x: usize, y: usize) -> f64 {
        (**self).log_prob(x, y)
    }
    fn row_log_probs(&self, x: usize) -> Vec<f64> {
        (**self).row_log_probs(x)
    }
}

/// `y*(x) = argmax_y π(y|x)`, ties broken toward the lowest response index.
pub fn modal_response<P: Policy + ?Sized>(policy: &P, x: usize) -> usize {
    argmax(&policy.row_log_probs(x))
}

/// Modal probability `π(y*(x)|x)`.
pub fn modal_probability<P: Policy + ?Sized>(policy: &P, x: usize) -> f64 {
    let row = policy.row_log_probs(x);
    row[argmax(&row)].exp()
}

/// Condition number `κ = Σ_x μ(x) / π(y*(x)|x)`, by exact enumeration over
/// the prompt set.
pub fn condition_number<P: Policy + ?Sized>(policy: &P, mu: &PromptDistribution) -> f64 {
    assert_eq!(
        mu.len(),
        policy.n_prompts(),
        "prompt distribution and policy disagree on the prompt count"
    );
    (0..policy.n_prompts())
        .map(|x| mu.weight(x) / modal_probability(policy, x))
        .sum()
}

/// Minimum confidence `c = min_x π(y*(x)|x)`.
pub fn min_confidence<P: Policy + ?Sized>(policy: &P) -> f64 {
    (0..policy.n_prompts())
        .map(|x| modal_probability(policy, x))
        .fold(f64::INFINITY, f64::min)
}

/// Margin `γ = min_x log(π(y*|x) / max_{y'≠y*} π(y'|x))`.
///
/// A row with a tied maximum contributes 0. Errors on a single-response
/// space, where no competitor exists.
pub fn margin<P: Policy + ?Sized>(policy: &P) -> Result<f64> {
    if policy.n_responses() < 2 {
        return Err(Error::UndefinedMargin);
    }
    let mut gamma = f64::INFINITY;
    for x in 0..policy.n_prompts() {
        let row = policy.row_log_probs(x);
        let best = argmax(&row);
        let runner_up = row
            .iter()
            .enumerate()
            .filter(|&(y, _)| y != best)
            .map(|(_, &v)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let gap = if row[best] == runner_up {
            0.0
        } else {
            row[best] - runner_up
        };
        gamma = gamma.min(gap);
    }
    Ok(gamma)
}

/// `P_{x~μ}[π(y*(x)|x) <= 1-δ]` by exact enumeration.
pub fn failure_probability<P: Policy + ?Sized>(
    policy: &P,
    mu: &PromptDistribution,
    delta: f64,
) -> f64 {
    assert!(
        delta > 0.0 && delta < 1.0,
        "delta must lie in (0,1), got {delta}"
    );
    assert_eq!(mu.len(), policy.n_prompts());
    (0..policy.n_prompts())
        .filter(|&x| modal_probability(policy, x) <= 1.0 - delta)
        .map(|x| mu.weight(x))
        .sum::<f64>()
        + 0.0 // empty sums carry a negative-zero identity
}

/// Draw a response from `π(·|x)` by inverse CDF over the ordered response
/// set; deterministic given the stream state.
pub fn sample_response<P: Policy + ?Sized, R: Rng + ?Sized>(
    policy: &P,
    x: usize,
    rng: &mut R,
) -> usize {
    let probs: Vec<f64> = policy.row_log_probs(x).iter().map(|&l| l.exp()).collect();
    sample_from_probs(&probs, rng)
}

/// The triple (κ, c, γ) for one policy under one prompt distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyDiagnostics {
    pub kappa: f64,
    pub min_confidence_c: f64,
    pub margin_gamma: f64,
}

impl PolicyDiagnostics {
    pub fn measure<P: Policy + ?Sized>(policy: &P, mu: &PromptDistribution) -> Result<Self> {
        Ok(Self {
            kappa: condition_number(policy, mu),
            min_confidence_c: min_confidence(policy),
            margin_gamma: margin(policy)?,
        })
    }
}
