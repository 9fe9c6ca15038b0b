//! Tabular policies.
//!
//! [`TabularPolicy`] is the object the update loop iterates: every entry is
//! strictly positive, matching the positivity the condition-number analysis
//! needs (κ would be infinite otherwise). Inputs with any zero probability
//! are rejected at construction; there is no silent flooring.
//!
//! [`RowPolicy`] is the general row-stochastic variant that admits zero-mass
//! responses. The adversarial instance family needs it: its sentinel row is
//! a point mass and its informative rows put no mass on the sentinel
//! response. All diagnostic operations work on both through the [`Policy`]
//! trait.

use std::fmt::Write as _;

use super::{check_distribution, log_sum_exp, Policy};
use crate::error::{Error, Result};

/// Strictly positive conditional distribution stored as log-probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularPolicy {
    n_prompts: usize,
    n_responses: usize,
    /// Row-major `log π(y|x)`; every entry finite.
    log_probs: Vec<f64>,
}

impl TabularPolicy {
    /// Build from probability rows. Rows must be equal-length distributions
    /// with strictly positive entries.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (n_prompts, n_responses, probs) = collect_rows(rows)?;
        for (i, &p) in probs.iter().enumerate() {
            if p <= 0.0 {
                return Err(Error::ZeroProbability {
                    prompt: i / n_responses,
                    response: i % n_responses,
                });
            }
        }
        Ok(Self {
            n_prompts,
            n_responses,
            log_probs: probs.iter().map(|&p| p.ln()).collect(),
        })
    }

    /// Build directly from log-probability rows that are already normalized
    /// (each row's log-sum-exp is renormalized away here, so callers may pass
    /// unnormalized logits). Entries must be finite.
    pub fn from_logits(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidParameter {
                name: "n_prompts",
                value: 0.0,
                requirement: "at least one row",
            });
        }
        let n_responses = rows[0].len();
        let mut log_probs = Vec::with_capacity(rows.len() * n_responses);
        for (x, row) in rows.iter().enumerate() {
            if row.len() != n_responses {
                return Err(Error::ShapeMismatch {
                    context: "ragged rows",
                    expected: n_responses,
                    got: row.len(),
                });
            }
            for (y, &l) in row.iter().enumerate() {
                if !l.is_finite() {
                    return Err(Error::ZeroProbability { prompt: x, response: y });
                }
            }
            let z = log_sum_exp(row);
            log_probs.extend(row.iter().map(|&l| l - z));
        }
        Ok(Self {
            n_prompts: rows.len(),
            n_responses,
            log_probs,
        })
    }

    /// Uniform policy over `n_responses`.
    pub fn uniform(n_prompts: usize, n_responses: usize) -> Self {
        assert!(n_prompts > 0 && n_responses > 0);
        let l = -((n_responses as f64).ln());
        Self {
            n_prompts,
            n_responses,
            log_probs: vec![l; n_prompts * n_responses],
        }
    }

    /// Probability rows, exponentiated for reporting.
    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_prompts)
            .map(|x| self.row(x).iter().map(|&l| l.exp()).collect())
            .collect()
    }

    pub(crate) fn row(&self, x: usize) -> &[f64] {
        &self.log_probs[x * self.n_responses..(x + 1) * self.n_responses]
    }

    pub fn log_probs(&self) -> &[f64] {
        &self.log_probs
    }

    /// Serialize to the plain-text matrix format: first line
    /// `n_prompts n_responses`, then one whitespace-separated probability row
    /// per prompt. Floats print in shortest round-trip form.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{} {}", self.n_prompts, self.n_responses);
        for x in 0..self.n_prompts {
            let row: Vec<String> = self.row(x).iter().map(|&l| l.exp().to_string()).collect();
            let _ = writeln!(out, "{}", row.join(" "));
        }
        out
    }

    /// Parse the plain-text matrix format produced by [`Self::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or(Error::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let mut parts = header.split_whitespace();
        let n_prompts: usize = parse_field(parts.next(), 1, "n_prompts")?;
        let n_responses: usize = parse_field(parts.next(), 1, "n_responses")?;
        let mut rows = Vec::with_capacity(n_prompts);
        for _ in 0..n_prompts {
            let (idx, line) = lines.next().ok_or(Error::Parse {
                line: n_prompts + 1,
                message: "missing probability row".into(),
            })?;
            let row: Vec<f64> = line
                .split_whitespace()
                .map(|tok| {
                    tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: idx + 1,
                        message: format!("bad probability {tok:?}: {e}"),
                    })
                })
                .collect::<Result<_>>()?;
            if row.len() != n_responses {
                return Err(Error::Parse {
                    line: idx + 1,
                    message: format!("expected {n_responses} entries, got {}", row.len()),
                });
            }
            rows.push(row);
        }
        Self::from_rows(&rows)
    }
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, name: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    let tok = tok.ok_or_else(|| Error::Parse {
        line,
        message: format!("missing {name}"),
    })?;
    tok.parse().map_err(|e| Error::Parse {
        line,
        message: format!("bad {name} {tok:?}: {e}"),
    })
}

impl Policy for TabularPolicy {
    fn n_prompts(&self) -> usize {
        self.n_prompts
    }
    fn n_responses(&self) -> usize {
        self.n_responses
    }
    fn log_prob(&self, x: usize, y: usize) -> f64 {
        assert!(y < self.n_responses, "response index {y} out of range");
        self.row(x)[y]
    }
    fn row_log_probs(&self, x: usize) -> Vec<f64> {
        self.row(x).to_vec()
    }
}

/// Row-stochastic policy admitting zero-mass responses; `log_prob` returns
/// `-inf` off the support.
#[derive(Debug, Clone, PartialEq)]
pub struct RowPolicy {
    n_prompts: usize,
    n_responses: usize,
    log_probs: Vec<f64>,
}

impl RowPolicy {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let (n_prompts, n_responses, probs) = collect_rows(rows)?;
        Ok(Self {
            n_prompts,
            n_responses,
            log_probs: probs
                .iter()
                .map(|&p| if p > 0.0 { p.ln() } else { f64::NEG_INFINITY })
                .collect(),
        })
    }

    /// Assemble from already-normalized log rows (`-inf` marks zero mass).
    pub(crate) fn from_log_rows(n_prompts: usize, n_responses: usize, log_probs: Vec<f64>) -> Self {
        debug_assert_eq!(log_probs.len(), n_prompts * n_responses);
        Self {
            n_prompts,
            n_responses,
            log_probs,
        }
    }

    pub(crate) fn row(&self, x: usize) -> &[f64] {
        &self.log_probs[x * self.n_responses..(x + 1) * self.n_responses]
    }
}

impl Policy for RowPolicy {
    fn n_prompts(&self) -> usize {
        self.n_prompts
    }
    fn n_responses(&self) -> usize {
        self.n_responses
    }
    fn log_prob(&self, x: usize, y: usize) -> f64 {
        assert!(y < self.n_responses, "response index {y} out of range");
        self.row(x)[y]
    }
    fn row_log_probs(&self, x: usize) -> Vec<f64> {
        self.row(x).to_vec()
    }
}

fn collect_rows(rows: &[Vec<f64>]) -> Result<(usize, usize, Vec<f64>)> {
    if rows.is_empty() {
        return Err(Error::InvalidParameter {
            name: "n_prompts",
            value: 0.0,
            requirement: "at least one row",
        });
    }
    let n_responses = rows[0].len();
    if n_responses == 0 {
        return Err(Error::InvalidParameter {
            name: "n_responses",
            value: 0.0,
            requirement: "at least one response",
        });
    }
    let mut probs = Vec::with_capacity(rows.len() * n_responses);
    for (x, row) in rows.iter().enumerate() {
        if row.len() != n_responses {
            return Err(Error::ShapeMismatch {
                context: "ragged rows",
                expected: n_responses,
                got: row.len(),
            });
        }
        check_distribution(row, x)?;
        probs.extend_from_slice(row);
    }
    Ok((rows.len(), n_responses, probs))
}
