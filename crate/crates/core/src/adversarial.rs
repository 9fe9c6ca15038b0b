//! Constructive counterexamples.
//!
//! Two families live here. The hard-instance family hides a secret label
//! vector behind an information-sparse prompt distribution: a sentinel
//! prompt carries mass `1 − Δ` and teaches nothing, while each of `d`
//! informative prompts answers from a nearly uniform distribution whose
//! favored response (probability `2/M`, against `(M−2)/(M(M−1))` elsewhere)
//! encodes one coordinate of the key. Measuring how often a learner's
//! one-round update still assigns mass ≤ 1/2 to the planted response, as a
//! function of the sample budget, probes the single-step failure rate.
//!
//! The trap family is an autoregressive construction in which a locally
//! dominant first token diverts greedy decoding away from the unique
//! global-argmax sequence: the trap token gets first-step mass `p* + ε`,
//! the correct token `p*`, and every continuation of the trap is squashed
//! so the optimal sequence keeps the global lead with probability exactly
//! `p* ≤ 1/2`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fit::{linear_fit, LinearFit};
use crate::policy::{
    greedy_decode, AutoregressivePolicy, Policy, PromptDistribution, RowPolicy,
};
use crate::reward::{generate_dataset, gibbs_sharpen_rows, PreferenceTriple};
use crate::stream;

/// Construction margin γ; the published row formulas assume 1/2.
pub const CONSTRUCTION_GAMMA: f64 = 0.5;

/// Shape of a hard-instance family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardInstanceParams {
    /// Number of informative prompts.
    pub d: usize,
    /// Number of candidate labels per informative prompt; the response set
    /// is `{y_0, …, y_M}` of size `M + 1`.
    pub m: usize,
    /// Mass spread across the informative prompts; the sentinel keeps
    /// `1 − Δ`.
    pub delta: f64,
}

impl HardInstanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.m < 3 {
            return Err(Error::InvalidParameter {
                name: "m",
                value: self.m as f64,
                requirement: "M >= 3 (off-target mass well-defined at gamma = 1/2)",
            });
        }
        if self.d < 1 {
            return Err(Error::InvalidParameter {
                name: "d",
                value: self.d as f64,
                requirement: "d >= 1",
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

    /// `log |Π| = d·log M` in nats.
    pub fn log_class_size(&self) -> f64 {
        self.d as f64 * (self.m as f64).ln()
    }
}

/// One sampled instance: parameters plus the secret key.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstance {
    params: HardInstanceParams,
    /// Favored response id (in `1..=M`) per informative prompt.
    key: Vec<usize>,
    mu: PromptDistribution,
}

impl HardInstance {
    pub fn params(&self) -> &HardInstanceParams {
        &self.params
    }

    pub fn key(&self) -> &[usize] {
        &self.key
    }

    /// Construction margin, fixed at 1/2.
    pub fn gamma(&self) -> f64 {
        CONSTRUCTION_GAMMA
    }

    /// The prompt distribution `μ = (1−Δ, Δ/d, …, Δ/d)`.
    pub fn mu(&self) -> &PromptDistribution {
        &self.mu
    }

    /// The planted optimal response at prompt `x`: `y_0` at the sentinel,
    /// the keyed label at informative prompts.
    pub fn planted_response(&self, x: usize) -> usize {
        if x == 0 {
            0
        } else {
            self.key[x - 1]
        }
    }

    /// The base model `π^I`: sentinel row `δ_{y_0}`, informative row
    /// favoring the keyed label.
    pub fn base_policy(&self) -> RowPolicy {
        let m = self.params.m;
        let mut rows = Vec::with_capacity(self.params.d + 1);
        let mut sentinel = vec![0.0; m + 1];
        sentinel[0] = 1.0;
        rows.push(sentinel);
        for &j in &self.key {
            rows.push(informative_row(m, j));
        }
        RowPolicy::from_rows(&rows).expect("hard-instance rows are valid distributions")
    }

    /// Closed-form condition number of order `p`:
    /// `((1−Δ) + Δ·(M(1−γ))^p)^{1/p}`.
    pub fn condition_number(&self, p: f64) -> f64 {
        closed_form_kappa(self.params.delta, self.params.m, CONSTRUCTION_GAMMA, p)
    }
}

/// `((1−Δ) + Δ·(M(1−γ))^p)^{1/p}` for any order `p ≥ 1`. The `p = 1` case
/// must agree with enumeration over the induced policy.
pub fn closed_form_kappa(delta: f64, m: usize, gamma: f64, p: f64) -> f64 {
    assert!(p >= 1.0, "order p must be at least 1");
    ((1.0 - delta) + delta * (m as f64 * (1.0 - gamma)).powf(p)).powf(1.0 / p)
}

/// The informative row favoring label `favored ∈ 1..=m` over the response
/// set `{y_0, …, y_m}`: mass `2/M` on the favored label,
/// `(M−2)/(M(M−1))` on the other labels, none on `y_0`.
pub fn informative_row(m: usize, favored: usize) -> Vec<f64> {
    assert!((1..=m).contains(&favored));
    let on = 2.0 / m as f64;
    let off = (m as f64 - 2.0) / (m as f64 * (m as f64 - 1.0));
    let mut row = vec![off; m + 1];
    row[0] = 0.0;
    row[favored] = on;
    row
}

/// Draw an instance with a uniform secret key; deterministic given the
/// stream state.
pub fn build_hard_instance<R: Rng + ?Sized>(
    params: &HardInstanceParams,
    rng: &mut R,
) -> Result<HardInstance> {
    params.validate()?;
    let key: Vec<usize> = (0..params.d).map(|_| rng.random_range(1..=params.m)).collect();
    let mut weights = vec![params.delta / params.d as f64; params.d + 1];
    weights[0] = 1.0 - params.delta;
    Ok(HardInstance {
        params: *params,
        key,
        mu: PromptDistribution::new(weights)?,
    })
}

/// `P_{x~μ}[π(y^I(x)|x) ≤ 1/2]` — the single-step failure event, measured
/// against the instance's planted optimal response.
pub fn instance_failure_probability<P: Policy + ?Sized>(
    policy: &P,
    instance: &HardInstance,
) -> f64 {
    let mu = instance.mu();
    (0..policy.n_prompts())
        .filter(|&x| {
            policy.log_prob(x, instance.planted_response(x)).exp() <= 0.5
        })
        .map(|x| mu.weight(x))
        .sum::<f64>()
        + 0.0 // empty sums carry a negative-zero identity
}

/// One-round learners for the hard family. Each sees only the dataset and
/// the family structure: reference log-probabilities enter solely at
/// sampled points, which is exactly the information the self-reward values
/// carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Learner {
    /// ERM over the natural class `{π^I}` sharpened by β. The class
    /// factorizes per prompt, so the arg min is found coordinatewise; this
    /// is exactly the full-class ERM with ties broken toward the lowest
    /// class index (see `factorized_matches_full_erm` below).
    SharpenedClassErm,
    /// Ignores the data and returns the base policy unchanged.
    ReturnBase,
}

impl Learner {
    pub fn learn(
        &self,
        instance: &HardInstance,
        base: &RowPolicy,
        dataset: &[PreferenceTriple],
        beta: f64,
    ) -> RowPolicy {
        match self {
            Learner::ReturnBase => base.clone(),
            Learner::SharpenedClassErm => factorized_erm(instance.params(), base, dataset, beta),
        }
    }
}

/// Coordinatewise ERM over the sharpened instance class.
fn factorized_erm(
    params: &HardInstanceParams,
    base: &RowPolicy,
    dataset: &[PreferenceTriple],
    beta: f64,
) -> RowPolicy {
    let m = params.m;
    // Sharpened candidate rows, shared across prompts: log-probabilities of
    // sharpen(P_j) for each label j.
    let candidate_rows: Vec<Vec<f64>> = (1..=m)
        .map(|j| {
            let row = RowPolicy::from_rows(&[informative_row(m, j)]).expect("valid row");
            gibbs_sharpen_rows(&row, beta).row_log_probs(0)
        })
        .collect();

    let mut log_rows: Vec<f64> = Vec::with_capacity((params.d + 1) * (m + 1));
    let mut sentinel = vec![f64::NEG_INFINITY; m + 1];
    sentinel[0] = 0.0;
    log_rows.extend_from_slice(&sentinel);

    for x in 1..=params.d {
        let ref_row = base.row_log_probs(x);
        let mut best_j = 1usize;
        let mut best_loss = f64::INFINITY;
        for (j, cand) in candidate_rows.iter().enumerate() {
            let mut loss = 0.0;
            for t in dataset.iter().filter(|t| t.x == x) {
                let lhs = cand[t.y] - ref_row[t.y];
                let rhs = cand[t.y_prime] - ref_row[t.y_prime];
                let r = beta * (lhs - rhs) - t.delta_r;
                loss += r * r;
            }
            if loss < best_loss {
                best_loss = loss;
                best_j = j + 1;
            }
        }
        log_rows.extend_from_slice(&candidate_rows[best_j - 1]);
    }
    RowPolicy::from_log_rows(params.d + 1, m + 1, log_rows)
}

/// Materialize the full sharpened class `{sharpen(π^I, β) : I ∈ [M]^d}` in
/// key-lexicographic order. Exponential in `d`; test-scale only.
pub fn materialize_sharpened_class(
    params: &HardInstanceParams,
    beta: f64,
) -> Result<Vec<RowPolicy>> {
    params.validate()?;
    let size = (params.m as u64).checked_pow(params.d as u32).ok_or(
        Error::ClassTooLarge {
            size: usize::MAX,
            limit: crate::reward::CLASS_SIZE_LIMIT,
        },
    )?;
    if size as usize > crate::reward::CLASS_SIZE_LIMIT {
        return Err(Error::ClassTooLarge {
            size: size as usize,
            limit: crate::reward::CLASS_SIZE_LIMIT,
        });
    }
    let mut class = Vec::with_capacity(size as usize);
    let mut key = vec![1usize; params.d];
    loop {
        let instance = HardInstance {
            params: *params,
            key: key.clone(),
            mu: PromptDistribution::uniform(params.d + 1),
        };
        class.push(gibbs_sharpen_rows(&instance.base_policy(), beta));
        // Advance the key odometer, least-significant coordinate last.
        let mut pos = params.d;
        loop {
            if pos == 0 {
                return Ok(class);
            }
            pos -= 1;
            if key[pos] < params.m {
                key[pos] += 1;
                break;
            }
            key[pos] = 1;
        }
    }
}

/// Mean and standard error of the per-trial failure probability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FailureRateEstimate {
    pub mean: f64,
    pub stderr: f64,
}

/// Run `trials` independent one-round experiments: fresh secret key, `n`
/// self-generated samples, one learner update, exact evaluation of the
/// failure event under μ. `beta` defaults to `1/sqrt(n)`. Trial `i` draws
/// from stream `i`, so the estimate is identical at any thread count.
pub fn measure_failure_rate(
    params: &HardInstanceParams,
    learner: &Learner,
    n: usize,
    beta: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<FailureRateEstimate> {
    measure_failure_rate_with(params, learner, n, beta, trials, seed, true)
}

/// [`measure_failure_rate`] with an explicit parallel/sequential switch
/// (the bench suite compares both paths).
pub fn measure_failure_rate_with(
    params: &HardInstanceParams,
    learner: &Learner,
    n: usize,
    beta: Option<f64>,
    trials: usize,
    seed: u64,
    parallel: bool,
) -> Result<FailureRateEstimate> {
    measure_failure_rate_streamed(params, learner, n, beta, trials, seed, 0, parallel)
}

#[allow(clippy::too_many_arguments)]
fn measure_failure_rate_streamed(
    params: &HardInstanceParams,
    learner: &Learner,
    n: usize,
    beta: Option<f64>,
    trials: usize,
    seed: u64,
    stream_base: u64,
    parallel: bool,
) -> Result<FailureRateEstimate> {
    params.validate()?;
    if trials < 1 {
        return Err(Error::InvalidParameter {
            name: "trials",
            value: trials as f64,
            requirement: "trials >= 1",
        });
    }
    if n < 1 {
        return Err(Error::InvalidParameter {
            name: "n",
            value: n as f64,
            requirement: "n >= 1",
        });
    }
    let beta = beta.unwrap_or(1.0 / (n as f64).sqrt());
    let trial = |i: usize| -> f64 {
        let mut rng = stream::stream_rng(seed, stream_base + i as u64);
        let instance = build_hard_instance(params, &mut rng).expect("validated params");
        let base = instance.base_policy();
        let dataset = generate_dataset(&base, instance.mu(), n, &mut rng);
        let learned = learner.learn(&instance, &base, &dataset, beta);
        instance_failure_probability(&learned, &instance)
    };
    let samples = if parallel {
        exec::run_indexed(trials, trial)
    } else {
        exec::run_indexed_seq(trials, trial)
    };
    Ok(summarize(&samples))
}

fn summarize(samples: &[f64]) -> FailureRateEstimate {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let stderr = if samples.len() > 1 {
        let var = samples.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    FailureRateEstimate { mean, stderr }
}

/// One measured point of a budget sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub n: usize,
    pub failure_rate: f64,
    pub stderr: f64,
    pub kappa_0: f64,
    pub log_class_size: f64,
}

/// Sweep the sample budget over `n_grid`, `trials` per point. Point `k`
/// uses streams `k·2^32 ..`, so points are independent and reproducible.
pub fn failure_rate_sweep(
    params: &HardInstanceParams,
    learner: &Learner,
    n_grid: &[usize],
    beta: Option<f64>,
    trials: usize,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    let kappa_0 = closed_form_kappa(params.delta, params.m, CONSTRUCTION_GAMMA, 1.0);
    n_grid
        .iter()
        .enumerate()
        .map(|(k, &n)| {
            let est = measure_failure_rate_streamed(
                params,
                learner,
                n,
                beta,
                trials,
                seed,
                (k as u64) << 32,
                true,
            )?;
            Ok(SweepPoint {
                n,
                failure_rate: est.mean,
                stderr: est.stderr,
                kappa_0,
                log_class_size: params.log_class_size(),
            })
        })
        .collect()
}

/// Sweep CSV schema: `n,failure_rate,stderr,kappa_0,log_class_size`.
pub fn sweep_to_csv(points: &[SweepPoint]) -> String {
    let mut out = String::from("n,failure_rate,stderr,kappa_0,log_class_size\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.n, p.failure_rate, p.stderr, p.kappa_0, p.log_class_size
        ));
    }
    out
}

/// Parse the schema emitted by [`sweep_to_csv`].
pub fn sweep_from_csv(text: &str) -> Result<Vec<SweepPoint>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty csv".into(),
    })?;
    if header != "n,failure_rate,stderr,kappa_0,log_class_size" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 5 fields, got {}", fields.len()),
            });
        }
        let bad = |i: usize, e: &dyn std::fmt::Display| Error::Parse {
            line: idx + 1,
            message: format!("bad field {:?}: {e}", fields[i]),
        };
        rows.push(SweepPoint {
            n: fields[0].parse().map_err(|e| bad(0, &e))?,
            failure_rate: fields[1].parse().map_err(|e| bad(1, &e))?,
            stderr: fields[2].parse().map_err(|e| bad(2, &e))?,
            kappa_0: fields[3].parse().map_err(|e| bad(3, &e))?,
            log_class_size: fields[4].parse().map_err(|e| bad(4, &e))?,
        });
    }
    Ok(rows)
}

/// Log-log slope of failure rate against budget, fitted on the points with
/// strictly positive rates. `None` when fewer than two such points exist.
pub fn fit_failure_slope(points: &[SweepPoint]) -> Option<LinearFit> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.failure_rate > 0.0)
        .map(|p| ((p.n as f64).ln(), p.failure_rate.ln()))
        .unzip();
    linear_fit(&xs, &ys)
}

// ---------------------------------------------------------------------------
// Trap policies
// ---------------------------------------------------------------------------

/// Token ids of the construction: the correct first token and the trap.
pub const CORRECT_TOKEN: usize = 0;
pub const TRAP_TOKEN: usize = 1;

/// Autoregressive trap: greedy decoding provably misses the unique optimal
/// sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct TrapPolicy {
    pub p_star: f64,
    pub epsilon: f64,
    policy: AutoregressivePolicy,
    optimal: Vec<usize>,
}

impl TrapPolicy {
    pub fn policy(&self) -> &AutoregressivePolicy {
        &self.policy
    }

    /// The designated optimal sequence `y* = (a, b, …)`.
    pub fn optimal_sequence(&self) -> &[usize] {
        &self.optimal
    }
}

/// Build the trap over vocabulary `{0..V}`, horizon `H`:
///
/// - step 1: trap token `p* + ε`, correct token `p*`, the rest uniform;
/// - along the optimal path: deterministic continuations, so
///   `π(y*) = p*` exactly;
/// - after the trap token: one designated continuation takes
///   `(p* − 2ε)/(p* + ε)` (clamped at 0 on the boundary `ε = p*/2`), the
///   remainder uniform — every trap-initiated sequence stays strictly below
///   `p*`;
/// - unreachable prefixes: uniform.
///
/// Requires `p* ∈ (0, 1/2]`, `0 < ε ≤ min(p*/2, 1 − 2p*)`, `V ≥ 3`,
/// `H ≥ 2`. At `p* = 1/2` no positive ε fits the bound.
pub fn build_trap_policy(
    p_star: f64,
    epsilon: f64,
    horizon: usize,
    vocab_size: usize,
) -> Result<TrapPolicy> {
    if !(p_star > 0.0 && p_star <= 0.5) {
        return Err(Error::InvalidParameter {
            name: "p_star",
            value: p_star,
            requirement: "p* in (0, 1/2]",
        });
    }
    let eps_max = (p_star / 2.0).min(1.0 - 2.0 * p_star);
    if !(epsilon > 0.0 && epsilon <= eps_max) {
        return Err(Error::InvalidParameter {
            name: "epsilon",
            value: epsilon,
            requirement: "0 < epsilon <= min(p*/2, 1 - 2p*)",
        });
    }
    if vocab_size < 3 {
        return Err(Error::InvalidParameter {
            name: "vocab_size",
            value: vocab_size as f64,
            requirement: "V >= 3",
        });
    }
    if horizon < 2 {
        return Err(Error::InvalidParameter {
            name: "horizon",
            value: horizon as f64,
            requirement: "H >= 2",
        });
    }

    let v = vocab_size;
    let optimal = vec![CORRECT_TOKEN; horizon];

    let mut steps: Vec<Vec<f64>> = Vec::with_capacity(horizon);
    // Step 1. The trap token must be the strict argmax, which also caps the
    // residual spread: with few spare tokens and small ε the leftover mass
    // `1 − 2p* − ε` can reach `p* + ε` per token and break the trap.
    let spread = (1.0 - 2.0 * p_star - epsilon) / (v as f64 - 2.0);
    if spread >= p_star + epsilon {
        return Err(Error::InvalidParameter {
            name: "vocab_size",
            value: v as f64,
            requirement: "residual mass per spare token must stay below p* + epsilon",
        });
    }
    let mut first = vec![spread; v];
    first[CORRECT_TOKEN] = p_star;
    first[TRAP_TOKEN] = p_star + epsilon;
    steps.push(first);

    // Steps 2..=H: one row per prefix, prefixes in base-V order.
    for h in 1..horizon {
        let rows = v.pow(h as u32);
        let mut table = vec![0.0; rows * v];
        for prefix_idx in 0..rows {
            let row = &mut table[prefix_idx * v..(prefix_idx + 1) * v];
            if prefix_idx == optimal_prefix_index(v, h) {
                // Deterministic continuation along y*.
                row[CORRECT_TOKEN] = 1.0;
            } else if h == 1 && prefix_idx == TRAP_TOKEN {
                // Continuations of the trap token: designated mass
                // saturating the cap, remainder uniform.
                let designated = ((p_star - 2.0 * epsilon) / (p_star + epsilon)).max(0.0);
                row[CORRECT_TOKEN] = designated;
                let rest = (1.0 - designated) / (v as f64 - 1.0);
                for item in row.iter_mut().skip(1) {
                    *item = rest;
                }
            } else {
                row.fill(1.0 / v as f64);
            }
        }
        steps.push(table);
    }

    let policy = AutoregressivePolicy::new(1, v, horizon, vec![steps])?;
    Ok(TrapPolicy {
        p_star,
        epsilon,
        policy,
        optimal,
    })
}

/// Base-V index of the all-`CORRECT_TOKEN` prefix of length `h` (zero,
/// since the correct token is 0 — kept explicit for clarity).
fn optimal_prefix_index(_v: usize, _h: usize) -> usize {
    CORRECT_TOKEN
}

/// Verification report: the three facts of the greedy-failure argument,
/// each established by exhaustive enumeration over all `V^H` sequences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrapReport {
    pub p_star: f64,
    pub epsilon: f64,
    #[serde(rename = "H")]
    pub horizon: usize,
    #[serde(rename = "V")]
    pub vocab_size: usize,
    pub optimal_prob: f64,
    pub greedy_sequence: Vec<usize>,
    pub optimal_sequence: Vec<usize>,
    /// `[unique global argmax, optimal_prob <= 1/2, greedy misses it]`.
    pub assertions: [bool; 3],
}

impl TrapReport {
    pub fn all_pass(&self) -> bool {
        self.assertions.iter().all(|&a| a)
    }
}

/// Check the three facts: (i) the declared `y*` is the unique global
/// argmax over all sequences, (ii) its probability is at most 1/2,
/// (iii) greedy decoding returns something else, entering at the trap
/// token.
pub fn verify_greedy_failure(trap: &TrapPolicy) -> TrapReport {
    let policy = trap.policy();
    let (modal, best_lp, second_lp) = policy.modal_sequence_exhaustive(0);
    let greedy = greedy_decode(policy, 0);
    let optimal_prob = policy.sequence_log_prob(0, trap.optimal_sequence()).exp();

    let unique_argmax = modal == trap.optimal_sequence() && best_lp > second_lp;
    let below_half = optimal_prob <= 0.5;
    let greedy_misses =
        greedy != trap.optimal_sequence() && greedy.first() == Some(&TRAP_TOKEN);

    TrapReport {
        p_star: trap.p_star,
        epsilon: trap.epsilon,
        horizon: policy.horizon(),
        vocab_size: policy.vocab_size(),
        optimal_prob,
        greedy_sequence: greedy,
        optimal_sequence: trap.optimal_sequence().to_vec(),
        assertions: [unique_argmax, below_half, greedy_misses],
    }
}
