//! Active-passive deployment: verdicts always come from the active model
//! while a passive clone retrains; the swap is a single atomic pointer store.

use std::sync::{Arc, Mutex};

use arc_swap::ArcSwap;
use serde::{Deserialize, Serialize};

use crate::cluster::PosttrainConfig;
use crate::error::{Error, Result};
use crate::experiment::{run_pipeline, PipelineOutcome};
use crate::heads::{Detector, OpenSetConfig};
use crate::ingest::LabeledFlow;
use crate::neural::TrainConfig;

use super::store::{CheckpointStore, StoredCheckpoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Serving,
    Retraining,
    Migrating,
}

#[derive(Debug)]
pub struct ActiveModel {
    pub detector: Detector,
    pub checkpoint: StoredCheckpoint,
}

/// Training settings of a retrain.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainSettings {
    pub train: TrainConfig,
    pub open_set: OpenSetConfig,
    pub posttrain: Option<PosttrainConfig>,
}

/// The next generation's training set and class list.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrainPlan {
    pub classes: Vec<String>,
    pub training: Vec<LabeledFlow>,
    /// Unseen-benign flows routed to the separate benign module.
    pub side_benign: Vec<LabeledFlow>,
    pub applied_clusters: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentStatus {
    pub phase: Phase,
    pub generation: u64,
    pub hash: String,
    pub classes: Vec<String>,
    pub last_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwapOutcome {
    pub checkpoint: StoredCheckpoint,
    pub previous: StoredCheckpoint,
    pub pipeline: PipelineOutcome,
}

pub struct Deployment {
    active: ArcSwap<ActiveModel>,
    phase: Mutex<Phase>,
    last_error: Mutex<Option<String>>,
    store: CheckpointStore,
}

impl Deployment {
    /// Stores `detector` as generation 0 and serves it.
    pub fn bootstrap(store: CheckpointStore, detector: Detector, training: &[LabeledFlow]) -> Result<Self> {
        let ckpt = store.save(0, &detector, training)?;
        store.promote(&ckpt)?;
        Ok(Self::with_active(store, detector, ckpt))
    }

    /// Serves the checkpoint the store's pointer names.
    pub fn open(store: CheckpointStore) -> Result<Self> {
        let ckpt = store
            .serving()?
            .ok_or_else(|| Error::NotFound(format!("no serving checkpoint under {}", store.dir().display())))?;
        let detector = store.load(&ckpt)?;
        Ok(Self::with_active(store, detector, ckpt))
    }

    fn with_active(store: CheckpointStore, detector: Detector, checkpoint: StoredCheckpoint) -> Self {
        Deployment {
            active: ArcSwap::from_pointee(ActiveModel { detector, checkpoint }),
            phase: Mutex::new(Phase::Serving),
            last_error: Mutex::new(None),
            store,
        }
    }

    pub fn active(&self) -> Arc<ActiveModel> {
        self.active.load_full()
    }

    pub fn store(&self) -> &CheckpointStore {
        &self.store
    }

    pub fn phase(&self) -> Phase {
        *self.phase.lock().expect("phase lock")
    }

    pub fn last_error(&self) -> Option<String> {
        self.last_error.lock().expect("error lock").clone()
    }

    pub fn status(&self) -> DeploymentStatus {
        let a = self.active();
        DeploymentStatus {
            phase: self.phase(),
            generation: a.checkpoint.generation,
            hash: a.checkpoint.hash.clone(),
            classes: a.detector.classes().to_vec(),
            last_error: self.last_error(),
        }
    }

    fn set_phase(&self, p: Phase) {
        *self.phase.lock().expect("phase lock") = p;
    }

    /// Clones the active model into a passive one (growing its output layer
    /// for new classes), runs the full pipeline on the plan, stores the
    /// result as the next generation and swaps it in. On failure the active
    /// model is untouched and the error is kept for the status report.
    pub fn retrain_and_swap(&self, plan: &RetrainPlan, settings: &RetrainSettings) -> Result<SwapOutcome> {
        {
            let mut p = self.phase.lock().expect("phase lock");
            if *p != Phase::Serving {
                return Err(Error::Conflict(format!("retrain not possible while {:?}", *p)));
            }
            *p = Phase::Retraining;
        }
        let current = self.active();
        let result = self.build_and_swap(&current, plan, settings);
        self.set_phase(Phase::Serving);
        *self.last_error.lock().expect("error lock") = result.as_ref().err().map(|e| e.to_string());
        if let Err(e) = &result {
            tracing::warn!(error = %e, "retrain failed; active model unchanged");
        }
        result
    }

    fn build_and_swap(&self, current: &ActiveModel, plan: &RetrainPlan, settings: &RetrainSettings) -> Result<SwapOutcome> {
        let generation = current.checkpoint.generation + 1;
        let mut passive = current
            .detector
            .warm_start(plan.classes.clone(), &settings.open_set, settings.train.seed.wrapping_add(generation))?;
        let pipeline = run_pipeline(&mut passive, &plan.training, &settings.train, settings.posttrain.as_ref())?;
        self.set_phase(Phase::Migrating);
        let checkpoint = self.store.save(generation, &passive, &plan.training)?;
        self.store.promote(&checkpoint)?;
        let previous = current.checkpoint.clone();
        self.active.store(Arc::new(ActiveModel {
            detector: passive,
            checkpoint: checkpoint.clone(),
        }));
        tracing::info!(generation, hash = %checkpoint.hash, "swapped in new model");
        Ok(SwapOutcome {
            checkpoint,
            previous,
            pipeline,
        })
    }
}
