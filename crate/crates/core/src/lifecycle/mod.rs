//! Novelty buffering, analyst decisions, and the active-passive retrain.

mod buffer;
mod decisions;
mod deploy;
mod engine;
mod store;

pub use buffer::{BufferedFlow, IngestOutcome, NoveltyBuffer, ObservedFlow};
pub use decisions::{Category, DecisionLog, LabelDecision};
pub use deploy::{ActiveModel, Deployment, DeploymentStatus, Phase, RetrainPlan, RetrainSettings, SwapOutcome};
pub use engine::{apply_decisions, Lifecycle, LifecycleStatus, NoveltyCluster, ObserveOutcome, RetrainReport, SampleView};
pub use store::{CheckpointStore, StoredCheckpoint, SERVING, TRAIN_MANIFEST};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifecycleConfig {
    /// Unknown verdicts that schedule a clustering job.
    pub trigger_threshold: usize,
    /// Buffer capacity; the oldest flows are evicted beyond it.
    pub capacity: usize,
    /// Checkpoint generations kept for rollback.
    pub retain: usize,
    pub cluster_seed: u64,
}

impl Default for LifecycleConfig {
    fn default() -> Self {
        LifecycleConfig {
            trigger_threshold: 200,
            capacity: 10_000,
            retain: 3,
            cluster_seed: 0,
        }
    }
}

/// Where unseen-benign clusters go.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BenignMode {
    /// Benign traffic is a trained class; clusters merge into it.
    Included { label: String },
    /// Benign traffic is handled by a separate module; clusters are written
    /// to its side manifest and stay out of the retrain set.
    Excluded { label: String },
}

impl BenignMode {
    pub fn new(include: bool, label: &str) -> Self {
        if include {
            BenignMode::Included { label: label.to_string() }
        } else {
            BenignMode::Excluded { label: label.to_string() }
        }
    }

    pub fn label(&self) -> &str {
        match self {
            BenignMode::Included { label } | BenignMode::Excluded { label } => label,
        }
    }
}
