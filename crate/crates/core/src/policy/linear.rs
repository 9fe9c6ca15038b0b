//! Linear softmax policies: `π_θ(y|x) ∝ exp(⟨φ(x,y), θ⟩)` with `‖φ‖₂ ≤ 1`
//! and `‖θ‖₂ ≤ B`, `B ≥ 1`.

use serde::{Deserialize, Serialize};

use super::{log_sum_exp, Policy};
use crate::error::{Error, Result};

/// Slack for the `‖φ‖ ≤ 1` and `‖θ‖ ≤ B` checks, absorbing solver round-off.
const NORM_TOL: f64 = 1e-9;

/// Feature map `φ(x,y) ∈ R^d` over a finite prompt/response grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    n_prompts: usize,
    n_responses: usize,
    dim: usize,
    /// Row-major by (prompt, response, component).
    values: Vec<f64>,
}

impl FeatureTable {
    /// Build from per-pair feature vectors; every vector must satisfy
    /// `‖φ(x,y)‖₂ ≤ 1`.
    pub fn new(n_prompts: usize, n_responses: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != n_prompts * n_responses * dim {
            return Err(Error::ShapeMismatch {
                context: "feature table length",
                expected: n_prompts * n_responses * dim,
                got: values.len(),
            });
        }
        let table = Self {
            n_prompts,
            n_responses,
            dim,
            values,
        };
        for x in 0..n_prompts {
            for y in 0..n_responses {
                let norm = norm2(table.phi(x, y));
                if norm > 1.0 + NORM_TOL {
                    return Err(Error::FeatureNormBound {
                        prompt: x,
                        response: y,
                        norm,
                    });
                }
            }
        }
        Ok(table)
    }

    pub fn n_prompts(&self) -> usize {
        self.n_prompts
    }
    pub fn n_responses(&self) -> usize {
        self.n_responses
    }
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `φ(x, y)`.
    pub fn phi(&self, x: usize, y: usize) -> &[f64] {
        let i = (x * self.n_responses + y) * self.dim;
        &self.values[i..i + self.dim]
    }

    /// `φ(x, y) − φ(x, y')`, the regression direction of one preference pair.
    pub fn psi(&self, x: usize, y: usize, y_prime: usize) -> Vec<f64> {
        self.phi(x, y)
            .iter()
            .zip(self.phi(x, y_prime))
            .map(|(a, b)| a - b)
            .collect()
    }
}

pub(crate) fn norm2(v: &[f64]) -> f64 {
    v.iter().map(|&a| a * a).sum::<f64>().sqrt()
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `π_θ(y|x) ∝ exp(⟨φ(x,y), θ⟩)`, `‖θ‖ ≤ B`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSoftmaxPolicy {
    theta: Vec<f64>,
    features: FeatureTable,
    radius_b: f64,
}

impl LinearSoftmaxPolicy {
    pub fn new(theta: Vec<f64>, features: FeatureTable, radius_b: f64) -> Result<Self> {
        if radius_b.is_nan() || radius_b < 1.0 {
            return Err(Error::InvalidParameter {
                name: "radius_b",
                value: radius_b,
                requirement: "B >= 1",
            });
        }
        if theta.len() != features.dim() {
            return Err(Error::ShapeMismatch {
                context: "theta dimension",
                expected: features.dim(),
                got: theta.len(),
            });
        }
        let norm = norm2(&theta);
        if norm > radius_b + NORM_TOL {
            return Err(Error::OutOfClass {
                norm,
                radius: radius_b,
            });
        }
        Ok(Self {
            theta,
            features,
            radius_b,
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }
    pub fn features(&self) -> &FeatureTable {
        &self.features
    }
    pub fn radius_b(&self) -> f64 {
        self.radius_b
    }

    /// Replace the parameter vector, revalidating the norm bound.
    pub fn with_theta(&self, theta: Vec<f64>) -> Result<Self> {
        Self::new(theta, self.features.clone(), self.radius_b)
    }

    fn logits(&self, x: usize) -> Vec<f64> {
        (0..self.features.n_responses())
            .map(|y| dot(self.features.phi(x, y), &self.theta))
            .collect()
    }

    /// Serialize θ, B, and the feature table as a flat JSON document.
    pub fn to_json(&self) -> String {
        let doc = LinearPolicyDoc {
            dim: self.features.dim(),
            n_prompts: self.features.n_prompts(),
            n_responses: self.features.n_responses(),
            radius_b: self.radius_b,
            theta: self.theta.clone(),
            features: self.features.values.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: LinearPolicyDoc = serde_json::from_str(text)?;
        let features = FeatureTable::new(doc.n_prompts, doc.n_responses, doc.dim, doc.features)?;
        Self::new(doc.theta, features, doc.radius_b)
    }
}

#[derive(Serialize, Deserialize)]
struct LinearPolicyDoc {
    dim: usize,
    n_prompts: usize,
    n_responses: usize,
    radius_b: f64,
    theta: Vec<f64>,
    features: Vec<f64>,
}

impl Policy for LinearSoftmaxPolicy {
    fn n_prompts(&self) -> usize {
        self.features.n_prompts()
    }
    fn n_responses(&self) -> usize {
        self.features.n_responses()
    }
    fn log_prob(&self, x: usize, y: usize) -> f64 {
        let logits = self.logits(x);
        logits[y] - log_sum_exp(&logits)
    }
    fn row_log_probs(&self, x: usize) -> Vec<f64> {
        let logits = self.logits(x);
        let z = log_sum_exp(&logits);
        logits.into_iter().map(|l| l - z).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn small_table() -> FeatureTable {
        // 2 prompts, 3 responses, d = 2; all vectors inside the unit ball.
        let values = vec![
            0.5, 0.1, //
            -0.3, 0.4, //
            0.2, -0.6, //
            0.1, 0.9, //
            -0.5, -0.5, //
            0.7, 0.0,
        ];
        FeatureTable::new(2, 3, 2, values).unwrap()
    }

    #[test]
    fn zero_theta_is_uniform() {
        let p = LinearSoftmaxPolicy::new(vec![0.0, 0.0], small_table(), 5.0).unwrap();
        for x in 0..2 {
            for y in 0..3 {
                assert_abs_diff_eq!(p.log_prob(x, y), -(3f64.ln()), epsilon = 1e-14);
            }
        }
    }

    #[test]
    fn rows_normalize() {
        let p = LinearSoftmaxPolicy::new(vec![1.2, -0.7], small_table(), 5.0).unwrap();
        for x in 0..2 {
            let sum: f64 = p.row_log_probs(x).iter().map(|&l| l.exp()).sum();
            assert_abs_diff_eq!(sum, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn norm_bounds_enforced() {
        let err = LinearSoftmaxPolicy::new(vec![4.0, 4.0], small_table(), 5.0).unwrap_err();
        assert!(matches!(err, Error::OutOfClass { .. }));

        let bad = FeatureTable::new(1, 1, 2, vec![0.9, 0.9]);
        assert!(matches!(bad, Err(Error::FeatureNormBound { .. })));

        let err = LinearSoftmaxPolicy::new(vec![0.0, 0.0], small_table(), 0.5).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter { .. }));
    }

    #[test]
    fn json_round_trip() {
        let p = LinearSoftmaxPolicy::new(vec![0.4, -0.2], small_table(), 5.0).unwrap();
        let q = LinearSoftmaxPolicy::from_json(&p.to_json()).unwrap();
        assert_eq!(p, q);
    }
}
