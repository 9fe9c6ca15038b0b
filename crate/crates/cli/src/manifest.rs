//! Run manifests: config echo, artifact version, per-file checksums, and
//! wall-clock duration. Re-running an identical config reproduces identical
//! checksums; only `duration_ms` varies between runs.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::RunContext;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub artifact_version: String,
    pub command: String,
    pub seed: u64,
    pub config: serde_json::Value,
    /// File name → SHA-256 of its bytes.
    pub files: BTreeMap<String, String>,
    pub duration_ms: u64,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Writes every `(name, content)` pair into the run's output directory,
/// then the manifest alongside them. Returns the manifest.
pub fn emit(
    ctx: &RunContext,
    started: Instant,
    outputs: &[(&str, String)],
) -> anyhow::Result<RunManifest> {
    std::fs::create_dir_all(&ctx.out_dir)?;
    let mut files = BTreeMap::new();
    for (name, content) in outputs {
        std::fs::write(ctx.out_dir.join(name), content)?;
        files.insert((*name).to_string(), sha256_hex(content.as_bytes()));
    }
    let manifest = RunManifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        command: ctx.command.to_string(),
        seed: ctx.seed,
        config: ctx.config_echo.clone(),
        files,
        duration_ms: started.elapsed().as_millis() as u64,
    };
    std::fs::write(
        ctx.out_dir.join(MANIFEST_FILE),
        serde_json::to_string_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

/// Read a manifest back.
pub fn load(dir: &Path) -> anyhow::Result<RunManifest> {
    let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn checksums_are_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
