//! Load generator for the accessibility gateway.
//!
//! Simulated speakers join rooms of eight, stream a scripted speech plan as
//! audio chunks and check that the transcripts coming back match the script.
//! End-to-end latency runs from the chunk that last carries an utterance's
//! speech to the `sign_sequence` for that utterance.

pub mod client;
pub mod profile;
pub mod report;
pub mod run;
pub mod thresholds;

pub use client::{ClientLog, Sample};
pub use profile::{LoadProfile, Pacing};
pub use report::LoadReport;
pub use run::{run_load, sweep, SweepReport, Target};
pub use thresholds::{Measured, Outcome, Thresholds, Verdict};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("no latency samples to summarise")]
    NoSamples,
    #[error("only {connected} of {clients} clients connected")]
    TooFewConnected { connected: usize, clients: usize },
    #[error("invalid thresholds: {0}")]
    InvalidThresholds(String),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl LoadError {
    pub fn code(&self) -> &'static str {
        match self {
            Self::InvalidProfile(_) => "INVALID_PROFILE",
            Self::NoSamples => "NO_SAMPLES",
            Self::TooFewConnected { .. } => "CONNECT_FAILED",
            Self::InvalidThresholds(_) => "INVALID_THRESHOLDS",
            Self::Io { .. } | Self::Csv(_) => "IO",
        }
    }
}
