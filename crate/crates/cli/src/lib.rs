//! Experiment harness: configuration, seeding, orchestration, and data
//! emission for the alignment-loop experiments.
//!
//! Every experiment is a pure function of (config, seed): work fans out over
//! counter-based streams and merges in fixed order, so reruns are
//! byte-identical at any thread count. Each run leaves its data files plus a
//! manifest with per-file checksums in the output directory.

pub mod commands;
pub mod config;
pub mod gen;
pub mod manifest;
pub mod plot;

use std::path::PathBuf;

/// Environment variable overriding the output directory (and nothing else).
pub const OUT_DIR_ENV: &str = "SRA_OUT";

/// Resolved invocation context shared by all commands.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub command: &'static str,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Parsed config document, echoed into the manifest.
    pub config_echo: serde_json::Value,
}

/// What a command reports back to the exit-code logic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CommandOutcome {
    /// True when an assertion-bearing experiment failed its assertions
    /// (exit code 1). Config and I/O problems surface as errors instead
    /// (exit code 2).
    pub assertions_failed: bool,
}

impl CommandOutcome {
    pub fn ok() -> Self {
        Self {
            assertions_failed: false,
        }
    }
}
