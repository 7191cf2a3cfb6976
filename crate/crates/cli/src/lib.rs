//! Command-line harness: collective schedules, single-network
//! synchronisation and mobile-agent scenario experiments.

pub mod commands;
pub mod config;
pub mod manifest;

pub use commands::{
    collective, run_collective, run_scenarios, run_sync_batch, CollectiveSummary, Pattern,
    ScenarioRun, SYNC_HEADER,
};
pub use config::{parse_seeds, ExperimentConfig};
pub use manifest::{sha256_hex, verify, ManifestEntry, OutputDir, RunManifest, MANIFEST_NAME};
