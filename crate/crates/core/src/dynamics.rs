//! Deterministic machinery for the condition-number recurrence
//! `κ_t ≤ M0 + M1·√κ_{t−1} + M2·log κ_{t−1}`.
//!
//! With `log x ≤ (2/e)·√x` folded into `K := M1 + (2/e)·M2`, the recurrence
//! reduces to `κ_t ≤ M0 + K·√κ_{t−1}`, whose fixed point and contraction
//! rate are explicit:
//!
//! ```text
//! √U = (K + √(K² + 4·M0)) / 2        U = M0 + K·√U
//! q  = K / (K + √(K² + 4·M0)) ∈ [0, 1)
//! ```
//!
//! Hidden constants in the source bounds are taken as 1 throughout;
//! consumers compare trends (slopes, ratios, orderings), never absolute
//! levels. All logarithms are natural.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Model-complexity term entering the square-root coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Complexity {
    /// Finite class: `log |Π|` in nats.
    Finite { log_class_size: f64 },
    /// Linear softmax class of dimension `d` and radius `B`.
    Linear { d: usize, b: f64 },
}

/// Inputs the theory bounds are evaluated at.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryInputs {
    /// Minimum confidence c ∈ (0, 1].
    pub c: f64,
    /// Margin γ > 0 in nats.
    pub gamma: f64,
    /// Failure-mass threshold δ ∈ (0, 1).
    pub delta: f64,
    /// Bound confidence level ρ ∈ (0, 1).
    pub rho: f64,
    /// Samples per round.
    pub n: usize,
    /// Regularization inverse-strength β > 0.
    pub beta: f64,
    pub complexity: Complexity,
}

impl TheoryInputs {
    pub fn validate(&self) -> Result<()> {
        let checks: [(&'static str, f64, bool, &'static str); 5] = [
            ("c", self.c, self.c > 0.0 && self.c <= 1.0, "c in (0,1]"),
            ("gamma", self.gamma, self.gamma > 0.0, "gamma > 0"),
            (
                "delta",
                self.delta,
                self.delta > 0.0 && self.delta < 1.0,
                "delta in (0,1)",
            ),
            (
                "rho",
                self.rho,
                self.rho > 0.0 && self.rho < 1.0,
                "rho in (0,1)",
            ),
            ("beta", self.beta, self.beta > 0.0, "beta > 0"),
        ];
        for (name, value, ok, requirement) in checks {
            if !ok {
                return Err(Error::InvalidParameter {
                    name,
                    value,
                    requirement,
                });
            }
        }
        if self.n < 1 {
            return Err(Error::InvalidParameter {
                name: "n",
                value: self.n as f64,
                requirement: "n >= 1",
            });
        }
        if let Complexity::Linear { d, b } = self.complexity {
            if d < 1 || b.is_nan() || b < 1.0 {
                return Err(Error::InvalidParameter {
                    name: "complexity",
                    value: b,
                    requirement: "d >= 1 and B >= 1",
                });
            }
        }
        Ok(())
    }

    /// The complexity factor multiplying `1/(γδ√n)`: `log(n|Π|/ρ)` for a
    /// finite class, `(d·log(nB/(dρ)))^{3/2}` for the linear-softmax class.
    pub fn complexity_factor(&self) -> f64 {
        match self.complexity {
            Complexity::Finite { log_class_size } => {
                (self.n as f64).ln() + log_class_size - self.rho.ln()
            }
            Complexity::Linear { d, b } => {
                let d = d as f64;
                let inner = (self.n as f64 * b / (d * self.rho)).ln();
                (d * inner).powf(1.5)
            }
        }
    }
}

/// The recurrence constants and their derived fixed point and rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceParams {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
    /// `K = M1 + (2/e)·M2`.
    pub k: f64,
    /// Fixed point `U = M0 + K·√U`.
    pub u: f64,
    /// Contraction rate `q = K / (K + √(K² + 4·M0))`.
    pub q: f64,
}

impl RecurrenceParams {
    /// Derive `K`, `U`, `q` from the raw constants.
    pub fn from_constants(m0: f64, m1: f64, m2: f64) -> Self {
        assert!(m0 > 0.0 && m1 >= 0.0 && m2 >= 0.0);
        let k = m1 + (2.0 / std::f64::consts::E) * m2;
        let disc = (k * k + 4.0 * m0).sqrt();
        let sqrt_u = (k + disc) / 2.0;
        RecurrenceParams {
            m0,
            m1,
            m2,
            k,
            u: sqrt_u * sqrt_u,
            q: k / (k + disc),
        }
    }

    /// One step of the un-reduced recurrence
    /// `M0 + M1·√κ + M2·log κ` — kept alongside the reduced form so the
    /// `log x ≤ (2/e)√x` fold can be cross-checked numerically.
    pub fn raw_step(&self, kappa: f64) -> f64 {
        assert!(kappa >= 1.0);
        self.m0 + self.m1 * kappa.sqrt() + self.m2 * kappa.ln()
    }

    /// One step of the reduced recurrence `M0 + K·√κ`.
    pub fn reduced_step(&self, kappa: f64) -> f64 {
        assert!(kappa >= 1.0);
        self.m0 + self.k * kappa.sqrt()
    }
}

/// Instantiate the recurrence constants:
/// `M0 = 1 + 1/c`, `M1 = (1 + 1/c)·Λ/(γδ√n)`, `M2 = (1 + 1/c)·β/(γδ)`,
/// where `Λ` is the complexity factor of the class.
pub fn recurrence_params(inputs: &TheoryInputs) -> Result<RecurrenceParams> {
    inputs.validate()?;
    let m0 = 1.0 + 1.0 / inputs.c;
    let gd = inputs.gamma * inputs.delta;
    let m1 = m0 * inputs.complexity_factor() / (gd * (inputs.n as f64).sqrt());
    let m2 = m0 * inputs.beta / gd;
    Ok(RecurrenceParams::from_constants(m0, m1, m2))
}

/// Envelope `κ_t ≤ U + q^t·(κ_0 − U)` for `t = 0..=rounds`. Monotone toward
/// `U` from either side, never crossing it.
pub fn bound_trajectory(kappa_0: f64, params: &RecurrenceParams, rounds: usize) -> Vec<f64> {
    assert!(kappa_0 >= 1.0, "kappa_0 must be at least 1");
    (0..=rounds)
        .map(|t| params.u + params.q.powi(t as i32) * (kappa_0 - params.u))
        .collect()
}

/// Rounds needed for the initialization-dependent transient to drop below
/// the stable floor: `ceil(log(c·κ0) / log(1 + √(n·c)))`, or 0 when
/// `c·κ0 ≤ 1`.
pub fn iterations_threshold(c: f64, kappa_0: f64, n: usize) -> usize {
    assert!(c > 0.0 && c <= 1.0);
    assert!(kappa_0 >= 1.0);
    assert!(n >= 1);
    let product = c * kappa_0;
    if product <= 1.0 {
        return 0;
    }
    let denom = (1.0 + (n as f64 * c).sqrt()).ln();
    (product.ln() / denom).ceil() as usize
}

/// Unit-constant failure envelope after `rounds ≥ 1` updates:
/// `Λ/(γδ√n) · [1/√c + √κ0/(1 + √(nc))^{(T−1)/2}]`, where `Λ` is the
/// complexity factor in the linear case and 1 for finite classes (whose
/// logarithmic factors live inside the hidden constant).
pub fn failure_envelope(inputs: &TheoryInputs, kappa_0: f64, rounds: usize) -> f64 {
    assert!(rounds >= 1, "the envelope is defined for T >= 1");
    assert!(kappa_0 >= 0.0);
    let factor = match inputs.complexity {
        Complexity::Finite { .. } => 1.0,
        Complexity::Linear { .. } => inputs.complexity_factor(),
    };
    let base = factor / (inputs.gamma * inputs.delta * (inputs.n as f64).sqrt());
    let stable = 1.0 / inputs.c.sqrt();
    let contraction = 1.0 + (inputs.n as f64 * inputs.c).sqrt();
    let transient = kappa_0.sqrt() / contraction.powf((rounds as f64 - 1.0) / 2.0);
    base * (stable + transient)
}

/// Theory-curve CSV schema: `t,envelope_kappa,envelope_failure`. Rows for
/// `t = 0..=rounds`; the failure envelope at `t = 0` is reported at its
/// `T = 1` value (the envelope is defined from the first update on).
pub fn theory_curve_csv(inputs: &TheoryInputs, kappa_0: f64, rounds: usize) -> Result<String> {
    let params = recurrence_params(inputs)?;
    let kappas = bound_trajectory(kappa_0.max(1.0), &params, rounds);
    let mut out = String::from("t,envelope_kappa,envelope_failure\n");
    for (t, kappa) in kappas.iter().enumerate() {
        let failure = failure_envelope(inputs, kappa_0, t.max(1));
        out.push_str(&format!("{t},{kappa},{failure}\n"));
    }
    Ok(out)
}

/// Parse the schema emitted by [`theory_curve_csv`].
pub fn theory_curve_from_csv(text: &str) -> Result<Vec<(usize, f64, f64)>> {
    let mut lines = text.lines().enumerate();
    let (_, header) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty csv".into(),
    })?;
    if header != "t,envelope_kappa,envelope_failure" {
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
