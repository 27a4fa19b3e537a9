//! Experiment harness behind the `smagda` command-line tool.

pub mod commands;
pub mod config;
pub mod output;

use std::fmt;

/// A failed command, classified by exit code.
#[derive(Debug)]
pub enum Failure {
    /// Malformed or inconsistent configuration (exit 2).
    Config(String),
    /// Every path or grid cell diverged (exit 3).
    Divergence(String),
    Other(anyhow::Error),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Failure::Config(_) => 2,
            Failure::Divergence(_) => 3,
            Failure::Other(_) => 1,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Divergence(m) => write!(f, "divergence: {m}"),
            Failure::Other(e) => write!(f, "{e:#}"),
        }
    }
}

impl std::error::Error for Failure {}

impl From<smagda::Error> for Failure {
    fn from(e: smagda::Error) -> Self {
        use smagda::Error as E;
        match e {
            E::InvalidParameter { .. }
            | E::DimensionMismatch { .. }
            | E::Mismatch { .. }
            | E::Precondition(_)
            | E::ConstrainedDual
            | E::Parse { .. } => Failure::Config(e.to_string()),
            E::Divergence { .. } | E::AllCellsDiverged => Failure::Divergence(e.to_string()),
            other => Failure::Other(other.into()),
        }
    }
}

/// Exit code when outputs were written but a check failed.
pub const EXIT_CHECK_FAILED: i32 = 4;
/// Exit code when outputs were written but some paths diverged.
pub const EXIT_DIVERGED: i32 = 3;
