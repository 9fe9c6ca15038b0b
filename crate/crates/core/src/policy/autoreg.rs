//! Autoregressive policies over `Y = V^H`: a conditional next-token
//! distribution per (prompt, step, prefix). Zero-mass tokens are allowed —
//! deterministic continuations are the whole point of the trap construction.
//!
//! Sequence probabilities combine in the log domain (a sum over steps), so
//! long horizons cannot underflow products. Prefixes index as base-`V`
//! integers, most significant digit first, which makes ascending prefix
//! order coincide with lexicographic sequence order.

use rand::Rng;

use super::{argmax, check_distribution, sample_from_probs, PromptDistribution};
use crate::error::{Error, Result};

/// Full-table autoregressive policy.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoregressivePolicy {
    n_prompts: usize,
    vocab_size: usize,
    horizon: usize,
    /// `steps[x][h]` is a `(V^h) x V` row-major table of log-conditionals
    /// for step `h` (0-based), one row per length-`h` prefix.
    steps: Vec<Vec<Vec<f64>>>,
}

impl AutoregressivePolicy {
    /// Build from probability tables: `steps[x][h]` flat row-major with
    /// `V^h` rows of `V` probabilities each. Every row must sum to one
    /// within `1e-12`.
    pub fn new(
        n_prompts: usize,
        vocab_size: usize,
        horizon: usize,
        steps: Vec<Vec<Vec<f64>>>,
    ) -> Result<Self> {
        if n_prompts == 0 || vocab_size < 2 || horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "dimensions",
                value: 0.0,
                requirement: "n_prompts >= 1, vocab_size >= 2, horizon >= 1",
            });
        }
        if steps.len() != n_prompts {
            return Err(Error::ShapeMismatch {
                context: "per-prompt step tables",
                expected: n_prompts,
                got: steps.len(),
            });
        }
        let mut log_steps = Vec::with_capacity(n_prompts);
        for tables in &steps {
            if tables.len() != horizon {
                return Err(Error::ShapeMismatch {
                    context: "step count",
                    expected: horizon,
                    got: tables.len(),
                });
            }
            let mut per_step = Vec::with_capacity(horizon);
            for (h, table) in tables.iter().enumerate() {
                let rows = vocab_size.pow(h as u32);
                if table.len() != rows * vocab_size {
                    return Err(Error::ShapeMismatch {
                        context: "step table length",
                        expected: rows * vocab_size,
                        got: table.len(),
                    });
                }
                for r in 0..rows {
                    check_distribution(&table[r * vocab_size..(r + 1) * vocab_size], r)?;
                }
                per_step.push(
                    table
                        .iter()
                        .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
                        .collect::<Vec<f64>>(),
                );
            }
            log_steps.push(per_step);
        }
        Ok(Self {
            n_prompts,
            vocab_size,
            horizon,
            steps: log_steps,
        })
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }
    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Number of sequences `V^H`, saturating at `usize::MAX`.
    pub fn sequence_count(&self) -> usize {
        let mut n: usize = 1;
        for _ in 0..self.horizon {
            n = n.saturating_mul(self.vocab_size);
        }
        n
    }

    fn prefix_index(&self, prefix: &[usize]) -> usize {
        prefix.iter().fold(0, |acc, &t| acc * self.vocab_size + t)
    }

    /// Log-conditional row for `prefix` at step `prefix.len()`.
    pub fn step_log_row(&self, x: usize, prefix: &[usize]) -> &[f64] {
        let h = prefix.len();
        assert!(h < self.horizon, "prefix length {h} at or beyond horizon");
        let row = self.prefix_index(prefix);
        &self.steps[x][h][row * self.vocab_size..(row + 1) * self.vocab_size]
    }

    /// `log π(y|x)` of a full sequence: the sum of step log-conditionals.
    pub fn sequence_log_prob(&self, x: usize, sequence: &[usize]) -> f64 {
        assert_eq!(sequence.len(), self.horizon, "sequence length mismatch");
        let mut total = 0.0;
        for h in 0..self.horizon {
            let l = self.step_log_row(x, &sequence[..h])[sequence[h]];
            if l == f64::NEG_INFINITY {
                return f64::NEG_INFINITY;
            }
            total += l;
        }
        total
    }

    /// Draw one sequence by sampling each conditional in order.
    pub fn sample_sequence<R: Rng + ?Sized>(&self, x: usize, rng: &mut R) -> Vec<usize> {
        let mut seq = Vec::with_capacity(self.horizon);
        for _ in 0..self.horizon {
            let probs: Vec<f64> = self
                .step_log_row(x, &seq)
                .iter()
                .map(|&l| l.exp())
                .collect();
            seq.push(sample_from_probs(&probs, rng));
        }
        seq
    }

    /// Exhaustive argmax over all `V^H` sequences. Returns the best sequence,
    /// its log-probability, and the runner-up log-probability (`-inf` when
    /// only one sequence has positive mass). Ties break toward the
    /// lexicographically first sequence.
    pub fn modal_sequence_exhaustive(&self, x: usize) -> (Vec<usize>, f64, f64) {
        let total = self.sequence_count();
        let mut best_idx = 0usize;
        let mut best = f64::NEG_INFINITY;
        let mut second = f64::NEG_INFINITY;
        let mut seq = vec![0usize; self.horizon];
        for idx in 0..total {
            self.decode_index(idx, &mut seq);
            let lp = self.sequence_log_prob(x, &seq);
            if lp > best {
                second = best;
                best = lp;
                best_idx = idx;
            } else if lp > second {
                second = lp;
            }
        }
        self.decode_index(best_idx, &mut seq);
        (seq, best, second)
    }

    fn decode_index(&self, mut idx: usize, out: &mut [usize]) {
        for h in (0..self.horizon).rev() {
            out[h] = idx % self.vocab_size;
            idx /= self.vocab_size;
        }
    }
}

/// Greedy decoding: `ŷ_h = argmax_v π(v | ŷ_{<h}, x)`, ties toward the
/// lowest token index. At horizon 1 this is the plain modal response.
pub fn greedy_decode(policy: &AutoregressivePolicy, x: usize) -> Vec<usize> {
    let mut seq = Vec::with_capacity(policy.horizon());
    for _ in 0..policy.horizon() {
        let row = policy.step_log_row(x, &seq);
        seq.push(argmax(row));
    }
    seq
}

/// Monte Carlo condition-number estimate for sequence spaces too large to
/// enumerate: per prompt, draw `samples` candidate sequences, score each
/// exactly, and use the best-scoring candidate as the mode estimate.
pub fn condition_number_monte_carlo<R: Rng + ?Sized>(
    policy: &AutoregressivePolicy,
    mu: &PromptDistribution,
    samples: usize,
    rng: &mut R,
) -> f64 {
    assert!(samples >= 1);
    assert_eq!(mu.len(), policy.n_prompts());
    (0..policy.n_prompts())
        .map(|x| {
            let best = best_sampled_log_prob(policy, x, samples, rng);
            mu.weight(x) * (-best).exp()
        })
        .sum()
}

/// Monte Carlo failure-probability estimate, same mode estimator as
/// [`condition_number_monte_carlo`].
pub fn failure_probability_monte_carlo<R: Rng + ?Sized>(
    policy: &AutoregressivePolicy,
    mu: &PromptDistribution,
    delta: f64,
    samples: usize,
    rng: &mut R,
) -> f64 {
    assert!(delta > 0.0 && delta < 1.0);
    assert!(samples >= 1);
    assert_eq!(mu.len(), policy.n_prompts());
    (0..policy.n_prompts())
        .filter_map(|x| {
            let best = best_sampled_log_prob(policy, x, samples, rng);
            (best.exp() <= 1.0 - delta).then(|| mu.weight(x))
        })
        .sum()
}

fn best_sampled_log_prob<R: Rng + ?Sized>(
    policy: &AutoregressivePolicy,
    x: usize,
    samples: usize,
    rng: &mut R,
) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for _ in 0..samples {
        let seq = policy.sample_sequence(x, rng);
        best = best.max(policy.sequence_log_prob(x, &seq));
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// V=2, H=2, single prompt: step 1 = (0.7, 0.3); after token 0 the next
    /// token is deterministic 1; after token 1 it is (0.5, 0.5).
    fn small_policy() -> AutoregressivePolicy {
        AutoregressivePolicy::new(
            1,
            2,
            2,
            vec![vec![vec![0.7, 0.3], vec![0.0, 1.0, 0.5, 0.5]]],
        )
        .unwrap()
    }

    #[test]
    fn sequence_log_probs_factorize() {
        let p = small_policy();
        assert_abs_diff_eq!(
            p.sequence_log_prob(0, &[0, 1]),
            (0.7f64).ln(),
            epsilon = 1e-15
        );
        assert_eq!(p.sequence_log_prob(0, &[0, 0]), f64::NEG_INFINITY);
        assert_abs_diff_eq!(
            p.sequence_log_prob(0, &[1, 0]),
            (0.15f64).ln(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn greedy_follows_conditional_argmax() {
        let p = small_policy();
        assert_eq!(greedy_decode(&p, 0), vec![0, 1]);
    }

    #[test]
    fn greedy_on_deterministic_path_returns_it() {
        let p = AutoregressivePolicy::new(
            1,
            3,
            2,
            vec![vec![
                vec![0.0, 0.0, 1.0],
                vec![
                    1.0 / 3.0,
                    1.0 / 3.0,
                    1.0 / 3.0, // after 0 (unreachable): uniform
                    1.0 / 3.0,
                    1.0 / 3.0,
                    1.0 / 3.0, // after 1 (unreachable): uniform
                    0.0,
                    1.0,
                    0.0, // after 2: deterministic 1
                ],
            ]],
        )
        .unwrap();
        assert_eq!(greedy_decode(&p, 0), vec![2, 1]);
        let (modal, lp, second) = p.modal_sequence_exhaustive(0);
        assert_eq!(modal, vec![2, 1]);
        assert_abs_diff_eq!(lp, 0.0, epsilon = 1e-15);
        assert!(second < lp);
    }

    #[test]
    fn horizon_one_greedy_is_modal_response() {
        let p =
            AutoregressivePolicy::new(1, 4, 1, vec![vec![vec![0.1, 0.2, 0.55, 0.15]]]).unwrap();
        assert_eq!(greedy_decode(&p, 0), vec![2]);
    }

    #[test]
    fn exhaustive_mode_ties_break_lexicographically() {
        let p = AutoregressivePolicy::new(
            1,
            2,
            2,
            vec![vec![vec![0.5, 0.5], vec![1.0, 0.0, 1.0, 0.0]]],
        )
        .unwrap();
        let (modal, lp, second) = p.modal_sequence_exhaustive(0);
        assert_eq!(modal, vec![0, 0]);
        assert_abs_diff_eq!(lp, (0.5f64).ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(second, (0.5f64).ln(), epsilon = 1e-15);
    }

    #[test]
    fn monte_carlo_estimators_match_exhaustive_on_small_spaces() {
        let p = small_policy();
        let mu = PromptDistribution::uniform(1);
        let (_, best, _) = p.modal_sequence_exhaustive(0);
        let mut rng = crate::stream::root_rng(11);
        let kappa = condition_number_monte_carlo(&p, &mu, 200, &mut rng);
        assert_abs_diff_eq!(kappa, (-best).exp(), epsilon = 1e-12);
        let mut rng = crate::stream::root_rng(11);
        let fail = failure_probability_monte_carlo(&p, &mu, 0.5, 200, &mut rng);
        // Modal sequence probability 0.7 > 0.5, so no failure.
        assert_eq!(fail, 0.0);
    }

    #[test]
    fn invalid_rows_rejected() {
        let err = AutoregressivePolicy::new(1, 2, 1, vec![vec![vec![0.6, 0.3]]]).unwrap_err();
        assert!(matches!(err, Error::NotNormalized { .. }));
    }
}
