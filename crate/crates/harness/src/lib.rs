//! Experiment harness for the replay-buffer estimator library.
//!
//! The library half of this crate drives [`replaylab_core`] to produce the
//! project's figures and verification suites; the binary half (`replaylab`)
//! is a thin command-line front end over [`cli::run`]. Every run writes its
//! outputs into a directory together with a JSON manifest recording the
//! resolved configuration, the per-run seed streams, and a SHA-256 digest of
//! each emitted file, so identical invocations are byte-for-byte
//! reproducible.

pub mod cli;
pub mod config;
pub mod csvio;
pub mod experiments;
pub mod manifest;
pub mod svg;
pub mod train;
pub mod verify;

/// Errors surfaced by the harness, each mapped to a process exit code.
#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    /// Bad command line, unreadable or invalid configuration. Exit code 1.
    #[error("config error: {0}")]
    Config(String),

    /// Filesystem trouble while emitting outputs. Exit code 2.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },

    /// A computation failed numerically. Exit code 2; the manifest is still
    /// written, with the affected outputs flagged as partial.
    #[error("numerical failure: {0}")]
    Numerical(String),

    /// A verification subcommand found a violated tolerance. Exit code 3.
    #[error("check failure: {0}")]
    CheckFailed(String),
}

impl HarnessError {
    /// The process exit code this error maps to.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 1,
            HarnessError::Io { .. } | HarnessError::Numerical(_) => 2,
            HarnessError::CheckFailed(_) => 3,
        }
    }
}

/// Library errors outside config resolution are runtime failures: the inputs
/// were validated up front, so anything the core rejects afterwards is a
/// numerical problem, not a configuration one.
impl From<replaylab_core::Error> for HarnessError {
    fn from(err: replaylab_core::Error) -> Self {
        HarnessError::Numerical(err.to_string())
    }
}

/// Harness-wide result type.
pub type Result<T> = std::result::Result<T, HarnessError>;
