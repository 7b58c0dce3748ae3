//! Experiment manifests: a byte-stable snapshot of everything that
//! determines the outputs, plus the seed ledger. Wall-clock information goes
//! to a separate `run_info.json` so data artifacts stay byte-identical under
//! re-runs.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentManifest {
    pub experiment: String,
    pub tool_version: String,
    /// Raw configuration entries after seed resolution.
    pub config: BTreeMap<String, String>,
    /// Effective master seed.
    pub seed: u64,
    /// Stream ids consumed per replica (the seed ledger).
    pub seed_ledger: Vec<SeedEntry>,
    /// Relative paths of every data artifact this run produces.
    pub outputs: Vec<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct SeedEntry {
    pub replica: usize,
    pub streams: Vec<u64>,
}

impl ExperimentManifest {
    pub fn new(experiment: &str, config: BTreeMap<String, String>, seed: u64) -> Self {
        ExperimentManifest {
            experiment: experiment.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            config,
            seed,
            seed_ledger: Vec::new(),
            outputs: Vec::new(),
        }
    }

    pub fn ledger_single(&mut self, replicas: usize) {
        self.seed_ledger =
            (0..replicas).map(|r| SeedEntry { replica: r, streams: vec![r as u64] }).collect();
    }

    pub fn ledger_pairs(&mut self, pairs: usize) {
        self.seed_ledger = (0..pairs)
            .map(|r| SeedEntry { replica: r, streams: vec![2 * r as u64, 2 * r as u64 + 1] })
            .collect();
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }
}

/// Timing sidecar, the only place wall-clock data is written.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunInfo {
    pub experiment: String,
    pub runtime_secs: f64,
    pub threads: usize,
}
