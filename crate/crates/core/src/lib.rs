//! Numerical laboratory for iterative self-rewarding alignment on finite
//! policy spaces.
//!
//! The loop under study: a policy scores its own sampled responses by
//! log-probability, regresses a fresh policy onto those self-reward
//! differences through a KL-anchored square loss, and repeats. On tabular and
//! linear-softmax classes every piece of that loop has a closed form or an
//! exact finite solve, which makes the dynamics measurable to machine
//! precision:
//!
//! - [`policy`] — tabular, linear-softmax, and autoregressive policies plus
//!   the diagnostics (condition number κ, minimum confidence c, margin γ);
//! - [`reward`] — self-generated preference datasets, the square loss, the
//!   exact Gibbs sharpening oracle, finite-class and norm-constrained linear
//!   ERM, and the multi-round iteration driver;
//! - [`dynamics`] — the κ recurrence: fixed point, contraction rate,
//!   trajectory envelopes, and the iteration threshold;
//! - [`adversarial`] — the hard-instance family for single-step failure-rate
//!   measurement and the trap policies that defeat greedy decoding;
//! - [`spectral`] — ridge effective dimension and spectral-regime bounds for
//!   feature covariances.
//!
//! Everything stochastic draws from counter-based streams ([`stream`]) keyed
//! by (seed, work-item), and parallel sweeps ([`exec`]) collect in index
//! order, so results are bit-identical at any thread count.

#![forbid(unsafe_code)]

pub mod adversarial;
pub mod dynamics;
pub mod error;
pub mod exec;
pub mod fit;
pub mod policy;
pub mod reward;
pub mod spectral;
pub mod stream;

pub use error::{Error, Result};
