//! Run manifest: the JSON record every subcommand leaves next to its files.
//!
//! The manifest echoes the resolved configuration, lists every derived seed
//! stream (with an explicit uniqueness check, so no two runs can ever share
//! randomness), stores a SHA-256 digest of each emitted file, and carries a
//! status field that distinguishes clean runs from numerically failed or
//! check-failed ones.

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::{HarnessError, Result};

/// Human-readable description of the seed-splitting rule, recorded verbatim
/// in every manifest.
pub const SEED_DERIVATION_RULE: &str = "stream_id = derive(derive(base_seed, [experiment_tag, \
     grid_index]), [seed_index]); derive() hashes its tags into the base with \
     a position-salted splitmix64 avalanche";

/// A file rendered in memory, waiting to be written into the output
/// directory.
#[derive(Debug, Clone)]
pub struct NamedFile {
    pub name: String,
    pub content: String,
}

impl NamedFile {
    pub fn new(name: impl Into<String>, content: impl Into<String>) -> Self {
        NamedFile {
            name: name.into(),
            content: content.into(),
        }
    }
}

/// Digest record of one emitted file.
#[derive(Debug, Clone, Serialize)]
pub struct OutputFile {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
    /// `true` when a numerical failure elsewhere in the run means this file
    /// is missing rows it would normally contain.
    pub partial: bool,
}

/// Seed bookkeeping for one simulated run (one grid point × one seed index).
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub grid_index: usize,
    pub grid_label: String,
    pub seed_index: usize,
    /// The run's derived top-level seed; sub-streams (path, batch) are
    /// derived from it inside the core.
    pub stream_id: u64,
}

/// Outcome of one verification check.
#[derive(Debug, Clone, Serialize)]
pub struct CheckRecord {
    pub name: String,
    /// The measured quantity (meaning documented per check in `detail`).
    pub value: f64,
    /// The bound it was compared against.
    pub threshold: f64,
    pub passed: bool,
    pub detail: String,
}

impl CheckRecord {
    /// The `check <name>: PASS/FAIL — <detail>` line printed on stdout.
    pub fn stdout_line(&self) -> String {
        format!(
            "check {}: {} — {}",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.detail
        )
    }
}

/// Overall status of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunStatus {
    Ok,
    NumericalFailure,
    CheckFailure,
}

/// The manifest document.
#[derive(Debug, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: String,
    pub status: RunStatus,
    pub wall_clock_seconds: f64,
    pub seed_derivation: &'static str,
    pub config: serde_json::Value,
    pub runs: Vec<RunRecord>,
    pub checks: Vec<CheckRecord>,
    /// Descriptions of numerical failures, empty on clean runs.
    pub failures: Vec<String>,
    pub outputs: Vec<OutputFile>,
}

/// Name of the manifest file inside the output directory.
pub const MANIFEST_NAME: &str = "manifest.json";

/// Lowercase hex SHA-256 of `bytes`.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for byte in digest {
        out.push_str(&format!("{byte:02x}"));
    }
    out
}

/// Fail if any two runs were handed the same seed stream.
pub fn assert_unique_stream_ids(runs: &[RunRecord]) -> Result<()> {
    let mut seen = std::collections::HashMap::with_capacity(runs.len());
    for run in runs {
        if let Some(previous) = seen.insert(run.stream_id, &run.grid_label) {
            return Err(HarnessError::Numerical(format!(
                "seed stream {} is shared by runs \"{}\" and \"{}\" — refusing to aggregate \
                 correlated randomness",
                run.stream_id, previous, run.grid_label
            )));
        }
    }
    Ok(())
}

/// Write `file` into `dir` and return its digest record.
pub fn write_output(dir: &std::path::Path, file: &NamedFile, partial: bool) -> Result<OutputFile> {
    let path = dir.join(&file.name);
    std::fs::write(&path, file.content.as_bytes()).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })?;
    Ok(OutputFile {
        path: file.name.clone(),
        sha256: sha256_hex(file.content.as_bytes()),
        bytes: file.content.len() as u64,
        partial,
    })
}

/// Serialize `manifest` into `dir`/manifest.json.
pub fn write_manifest(dir: &std::path::Path, manifest: &Manifest) -> Result<()> {
    let text = serde_json::to_string_pretty(manifest)
        .map_err(|e| HarnessError::Numerical(format!("manifest serialization failed: {e}")))?;
    let path = dir.join(MANIFEST_NAME);
    std::fs::write(&path, text.as_bytes()).map_err(|source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    })
}
