//! Run manifest written beside the trained artifact.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::Context;
use kgcp_core::eval::EvalReport;
use kgcp_core::io::{write_atomic, DatasetStats, SplitProvenance};
use kgcp_core::TrainConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetRecord {
    pub dir: PathBuf,
    pub policy: String,
    /// SHA-256 of train, valid and test files, in that order.
    pub digests: [String; 3],
    pub entity_vocab_digest: String,
    pub relation_vocab_digest: String,
    pub stats: serde_json::Value,
}

impl DatasetRecord {
    pub fn new(
        dir: &Path,
        policy: &str,
        provenance: &[SplitProvenance; 3],
        stats: &DatasetStats,
        vocab_digests: (String, String),
    ) -> Self {
        Self {
            dir: dir.to_owned(),
            policy: policy.to_owned(),
            digests: provenance.clone().map(|p| p.digest),
            entity_vocab_digest: vocab_digests.0,
            relation_vocab_digest: vocab_digests.1,
            stats: serde_json::to_value(stats).expect("stats serialize"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactRecord {
    pub path: PathBuf,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub final_loss: Option<f64>,
    pub final_mean_loss: Option<f64>,
    pub best_valid_mrr: Option<f64>,
    pub best_epoch: Option<usize>,
    pub valid: Option<serde_json::Value>,
    pub test: Option<serde_json::Value>,
}

impl Metrics {
    pub fn report(r: &EvalReport) -> serde_json::Value {
        serde_json::to_value(r).expect("report serialize")
    }
}

/// Everything needed to reproduce and audit a training run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config: TrainConfig,
    pub config_sha256: String,
    pub seed: u64,
    pub dataset: DatasetRecord,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub epochs_completed: usize,
    /// True when no optimizer step was taken: the artifact is the
    /// initialization.
    pub untrained: bool,
    pub peak_transient_bytes: usize,
    pub metrics: Metrics,
    pub artifact: ArtifactRecord,
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        write_atomic(path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))
    }
}

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}
