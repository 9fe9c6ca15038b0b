//! Per-experiment JSON config schemas.
//!
//! Every document accepts optional `seed` and `out_dir` keys; the `--seed`
//! and `--out` flags (and the `SRA_OUT` environment variable, for the
//! output directory only) take precedence.

use std::path::PathBuf;

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use sra_core::dynamics::TheoryInputs;
use sra_core::reward::UpdateConfig;
use sra_core::spectral::SpectralRegime;

/// Common optional keys shared by all experiment configs.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct CommonKeys {
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub out_dir: Option<PathBuf>,
}

/// Where the initial policy of an iterate run comes from.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicySpec {
    /// Rows `softmax(sharpness · z)` with standard-normal `z`.
    TabularRandom {
        n_prompts: usize,
        n_responses: usize,
        #[serde(default = "default_sharpness")]
        sharpness: f64,
    },
    /// Plain-text matrix format (`n_prompts n_responses` header line).
    TabularFile { path: PathBuf },
    /// Random unit-ball features and a random θ of the given norm.
    LinearRandom {
        n_prompts: usize,
        n_responses: usize,
        dim: usize,
        theta_norm: f64,
        radius_b: f64,
    },
    /// Flat JSON document with θ, B, and the feature table.
    LinearFile { path: PathBuf },
}

fn default_sharpness() -> f64 {
    1.0
}

/// Prompt distribution selector.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum MuSpec {
    #[default]
    Uniform,
    Weights {
        weights: Vec<f64>,
    },
}

/// Hypothesis class for erm-finite runs.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClassSpec {
    /// Sharpening ladder of the initial policy, sharpest rung first.
    GibbsLadder { rungs: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IterateConfig {
    #[serde(flatten)]
    pub common: CommonKeys,
    pub update: UpdateConfig,
    pub policy: PolicySpec,
    #[serde(default)]
    pub mu: MuSpec,
    #[serde(default)]
    pub class: Option<ClassSpec>,
    /// Confidence level for the theory overlay.
    #[serde(default = "default_rho")]
    pub rho: f64,
}

fn default_rho() -> f64 {
    0.05
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HardInstanceConfig {
    #[serde(flatten)]
    pub common: CommonKeys,
    pub d: usize,
    pub m: usize,
    pub delta: f64,
    pub n_grid: Vec<usize>,
    pub trials: usize,
    /// Defaults to `1/sqrt(n)` per grid point when absent.
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default = "default_learner")]
    pub learner: sra_core::adversarial::Learner,
}

fn default_learner() -> sra_core::adversarial::Learner {
    sra_core::adversarial::Learner::SharpenedClassErm
}

impl HardInstanceConfig {
    /// Grid: at least 4 strictly increasing points in (approximately)
    /// geometric progression; at least 100 trials per point.
    pub fn validate(&self) -> anyhow::Result<()> {
        if self.n_grid.len() < 4 {
            bail!("n_grid must have at least 4 points, got {}", self.n_grid.len());
        }
        for w in self.n_grid.windows(2) {
            if w[1] <= w[0] {
                bail!("n_grid must be strictly increasing (… {}, {} …)", w[0], w[1]);
            }
        }
        let ratios: Vec<f64> = self
            .n_grid
            .windows(2)
            .map(|w| w[1] as f64 / w[0] as f64)
            .collect();
        let (lo, hi) = ratios
            .iter()
            .fold((f64::INFINITY, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
        if hi / lo > 1.05 {
            bail!("n_grid must be geometric: step ratios range from {lo:.3} to {hi:.3}");
        }
        if self.trials < 100 {
            bail!("trials must be at least 100, got {}", self.trials);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrapConfig {
    #[serde(flatten)]
    pub common: CommonKeys,
    pub p_star_grid: Vec<f64>,
    /// Fractions of the maximal ε `min(p*/2, 1 − 2p*)`.
    pub epsilon_factors: Vec<f64>,
    pub h_grid: Vec<usize>,
    pub v_grid: Vec<usize>,
}

impl TrapConfig {
    /// Exhaustive verification enumerates `V^H` sequences per point.
    pub const ENUMERATION_LIMIT: f64 = 1e6;

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.p_star_grid.is_empty()
            || self.epsilon_factors.is_empty()
            || self.h_grid.is_empty()
            || self.v_grid.is_empty()
        {
            bail!("all trap grids must be nonempty");
        }
        for &v in &self.v_grid {
            for &h in &self.h_grid {
                let count = (v as f64).powi(h as i32);
                if count > Self::ENUMERATION_LIMIT {
                    bail!("grid point V={v}, H={h} needs {count:.0} sequences (> {:.0})",
                        Self::ENUMERATION_LIMIT);
                }
            }
        }
        Ok(())
    }
}

/// Spectrum the spectral command operates on.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SpectrumSource {
    /// The largest spectrum consistent with the regime, `d` entries.
    Saturating { d: usize },
    /// One eigenvalue per line.
    File { path: PathBuf },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LambdaGrid {
    pub from: f64,
    pub to: f64,
    pub points: usize,
}

impl LambdaGrid {
    pub fn values(&self) -> anyhow::Result<Vec<f64>> {
        if self.from.is_nan() || self.from <= 0.0 || self.to <= self.from || self.points < 2 {
            bail!("lambda grid needs 0 < from < to and at least 2 points");
        }
        let step = (self.to / self.from).ln() / (self.points - 1) as f64;
        Ok((0..self.points)
            .map(|k| self.from * (step * k as f64).exp())
            .collect())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralConfig {
    #[serde(flatten)]
    pub common: CommonKeys,
    pub regime: SpectralRegime,
    pub source: SpectrumSource,
    pub lambda_grid: LambdaGrid,
    /// Optional `d_eff(1/n) ~ a·log n + b` fit over this budget grid.
    #[serde(default)]
    pub fit_n_grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DynamicsConfig {
    #[serde(flatten)]
    pub common: CommonKeys,
    pub inputs: TheoryInputs,
    pub kappa0: f64,
    #[serde(rename = "T")]
    pub rounds: usize,
}

/// Parse a config file, pointing at the offending line/column on failure.
pub fn load<T: serde::de::DeserializeOwned>(path: &std::path::Path) -> anyhow::Result<(T, serde_json::Value)> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("cannot read config {}", path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .with_context(|| format!("config {} is not valid JSON", path.display()))?;
    let parsed: T = serde_json::from_str(&text).with_context(|| {
        format!(
            "config {} does not match the {} schema",
            path.display(),
            std::any::type_name::<T>()
        )
    })?;
    Ok((parsed, value))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hard_instance_grid_validation() {
        let mut cfg = HardInstanceConfig {
            common: CommonKeys::default(),
            d: 4,
            m: 8,
            delta: 0.2,
            n_grid: vec![250, 500, 1000, 2000],
            trials: 100,
            beta: None,
            learner: default_learner(),
        };
        assert!(cfg.validate().is_ok());
        cfg.n_grid = vec![250, 500, 900, 2000];
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![250, 500, 1000];
        assert!(cfg.validate().is_err());
        cfg.n_grid = vec![250, 500, 1000, 2000];
        cfg.trials = 1;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lambda_grid_is_geometric() {
        let grid = LambdaGrid {
            from: 1e-4,
            to: 1.0,
            points: 5,
        };
        let values = grid.values().unwrap();
        assert_eq!(values.len(), 5);
        for w in values.windows(2) {
            assert!((w[1] / w[0] - 10.0).abs() < 1e-9);
        }
    }

    #[test]
    fn trap_enumeration_limit_enforced() {
        let cfg = TrapConfig {
            common: CommonKeys::default(),
            p_star_grid: vec![0.4],
            epsilon_factors: vec![1.0],
            h_grid: vec![12],
            v_grid: vec![8],
        };
        assert!(cfg.validate().is_err());
    }
}
