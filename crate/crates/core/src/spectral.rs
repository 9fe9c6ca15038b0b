//! Ridge effective dimension of a feature covariance:
//! `d_eff(λ) = Tr(Σ(Σ + λI)^{-1}) = Σ_i λ_i/(λ_i + λ)`.
//!
//! Under spectral decay the effective dimension replaces the ambient one in
//! the complexity factor. Three decay regimes get explicit dominating
//! bounds, with constants taken from the constructive split-index argument
//! (head count + tail mass over λ) rather than the asymptotic statements,
//! so dominance is assertable point by point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::policy::{FeatureTable, Policy, PromptDistribution};

/// Eigenvalues below this are construction bugs, not round-off.
const PSD_TOL: f64 = -1e-10;

/// Nonincreasing, nonnegative eigenvalue list.
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrum {
    eigenvalues: Vec<f64>,
}

impl Spectrum {
    /// Sorts the input nonincreasing. Values in `(-1e-10, 0)` clamp to 0
    /// (symmetric-eigensolver round-off); anything below errors — a
    /// covariance must be positive semidefinite.
    pub fn from_eigenvalues(mut eigenvalues: Vec<f64>) -> Result<Self> {
        for v in eigenvalues.iter_mut() {
            if *v < PSD_TOL {
                return Err(Error::InvalidParameter {
                    name: "eigenvalue",
                    value: *v,
                    requirement: "eigenvalues of a PSD matrix must be >= -1e-10",
                });
            }
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        eigenvalues.sort_by(|a, b| b.partial_cmp(a).expect("finite eigenvalues"));
        Ok(Self { eigenvalues })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn trace(&self) -> f64 {
        self.eigenvalues.iter().sum()
    }

    pub fn rank(&self) -> usize {
        self.eigenvalues.iter().filter(|&&v| v > 0.0).count()
    }

    /// One eigenvalue per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for v in &self.eigenvalues {
            out.push_str(&v.to_string());
            out.push('\n');
        }
        out
    }

    /// Parse the one-eigenvalue-per-line format.
    pub fn from_text(text: &str) -> Result<Self> {
        let values: Vec<f64> = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                l.trim().parse::<f64>().map_err(|e| Error::Parse {
                    line: i + 1,
                    message: format!("bad eigenvalue {l:?}: {e}"),
                })
            })
            .collect::<Result<_>>()?;
        Self::from_eigenvalues(values)
    }
}

/// `d_eff(λ) = Σ_i λ_i/(λ_i + λ)`; strictly decreasing in λ for nonzero
/// spectra, bounded by `min(rank, trace/λ)`.
pub fn effective_dimension(spectrum: &Spectrum, lambda: f64) -> f64 {
    assert!(lambda > 0.0, "ridge parameter must be positive");
    spectrum
        .eigenvalues()
        .iter()
        .map(|&v| v / (v + lambda))
        .sum()
}

/// Spectral decay hypotheses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectralRegime {
    /// `λ_i ≤ C·e^{−αi}` (indices from 1).
    Exponential { c: f64, alpha: f64 },
    /// `λ_i ≤ C·i^{−p}` with `p > 1`.
    Polynomial { c: f64, p: f64 },
    /// `λ_i ≥ ϑ` for `i ≤ r`, tail mass `Σ_{i>r} λ_i = τ`.
    Spiked { r: usize, vartheta: f64, tau: f64 },
}

impl SpectralRegime {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            SpectralRegime::Exponential { c, alpha } => c > 0.0 && alpha > 0.0,
            SpectralRegime::Polynomial { c, p } => c > 0.0 && p > 1.0,
            SpectralRegime::Spiked { r, vartheta, tau } => r >= 1 && vartheta > 0.0 && tau > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "regime",
                value: 0.0,
                requirement: "exponential: C,alpha > 0; polynomial: C > 0, p > 1; spiked: r >= 1, vartheta, tau > 0",
            })
        }
    }

    /// The largest spectrum consistent with the hypothesis, truncated to
    /// `d` entries — the worst case for dominance checks.
    pub fn saturating_spectrum(&self, d: usize) -> Result<Spectrum> {
        self.validate()?;
        let values: Vec<f64> = match *self {
            SpectralRegime::Exponential { c, alpha } => {
                (1..=d).map(|i| c * (-alpha * i as f64).exp()).collect()
            }
            SpectralRegime::Polynomial { c, p } => {
                (1..=d).map(|i| c * (i as f64).powf(-p)).collect()
            }
            SpectralRegime::Spiked { r, vartheta, tau } => {
                let tail = d.saturating_sub(r);
                (0..d)
                    .map(|i| {
                        if i < r {
                            vartheta
                        } else {
                            tau / tail.max(1) as f64
                        }
                    })
                    .collect()
            }
        };
        Spectrum::from_eigenvalues(values)
    }
}

/// Dominating bound on `d_eff(λ)` under the regime, with the constructive
/// constants: exponential `⌈α^{-1}·log(C/λ)⌉₊ + 1` (the +1 covers the tail
/// term `1/(e^α − 1)`, valid for `α ≥ log 2`); polynomial
/// `2·⌈(C/λ)^{1/p}⌉` (tail `m^{1−p}/((p−1)λ)`, valid for `p ≥ 2`);
/// spiked `r + τ/λ` exactly.
pub fn regime_bound(regime: &SpectralRegime, lambda: f64) -> f64 {
    assert!(lambda > 0.0);
    match *regime {
        SpectralRegime::Exponential { c, alpha } => {
            let log_ratio = (c / lambda).ln();
            let head = if log_ratio > 0.0 {
                (log_ratio / alpha).ceil()
            } else {
                0.0
            };
            head + 1.0
        }
        SpectralRegime::Polynomial { c, p } => 2.0 * (c / lambda).powf(1.0 / p).ceil(),
        SpectralRegime::Spiked { r, tau, .. } => r as f64 + tau / lambda,
    }
}

/// Exact feature covariance `Σ = E_{x~μ, y~π(·|x)}[φφᵀ]` by enumeration,
/// eigendecomposed symmetrically.
pub fn empirical_feature_spectrum<P: Policy + ?Sized>(
    features: &FeatureTable,
    policy: &P,
    mu: &PromptDistribution,
) -> Result<Spectrum> {
    assert_eq!(mu.len(), features.n_prompts());
    assert_eq!(policy.n_prompts(), features.n_prompts());
    assert_eq!(policy.n_responses(), features.n_responses());
    let d = features.dim();
    let mut sigma = nalgebra::DMatrix::<f64>::zeros(d, d);
    for x in 0..features.n_prompts() {
        let row = policy.row_log_probs(x);
        for (y, &log_p) in row.iter().enumerate() {
            let w = mu.weight(x) * log_p.exp();
            if w == 0.0 {
                continue;
            }
            let phi = features.phi(x, y);
            for i in 0..d {
                for j in 0..d {
                    sigma[(i, j)] += w * phi[i] * phi[j];
                }
            }
        }
    }
    let eigen = nalgebra::SymmetricEigen::new(sigma);
    Spectrum::from_eigenvalues(eigen.eigenvalues.iter().cloned().collect())
}

/// Curve CSV schema: `lambda,d_eff,regime_bound`.
pub fn curve_to_csv(rows: &[(f64, f64, f64)]) -> String {
    let mut out = String::from("lambda,d_eff,regime_bound\n");
    for (lambda, d_eff, bound) in rows {
        out.push_str(&format!("{lambda},{d_eff},{bound}\n"));
    }
    out
}

/// Parse the schema emitted by [`curve_to_csv`].
pub fn curve_from_csv(text: &str) -> Result<Vec<(f64, f64, f64)>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty csv".into(),
    })?;
    if header != "lambda,d_eff,regime_bound" {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected header {header:?}"),
        });
    }
    let mut rows = Vec::new();
    for (idx, line) in lines {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: idx + 1,
                message: format!("expected 3 fields, got {}", fields.len()),
            });
        }
        let bad = |i: usize, e: &dyn std::fmt::Display| Error::Parse {
            line: idx + 1,
            message: format!("bad field {:?}: {e}", fields[i]),
        };
        rows.push((
            fields[0].parse().map_err(|e| bad(0, &e))?,
            fields[1].parse().map_err(|e| bad(1, &e))?,
            fields[2].parse().map_err(|e| bad(2, &e))?,
        ));
    }
    Ok(rows)
}
