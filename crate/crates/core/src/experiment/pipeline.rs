//! Train, measure clustering quality, post-train, measure again, refit.

use serde::{Deserialize, Serialize};

use crate::cluster::{posttrain, training_quality, ClusterQuality, PosttrainConfig, PosttrainReport};
use crate::error::Result;
use crate::heads::Detector;
use crate::ingest::LabeledFlow;
use crate::neural::{TrainConfig, TrainReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutcome {
    pub train: TrainReport,
    pub posttrain: Option<PosttrainReport>,
    pub quality_before: Option<ClusterQuality>,
    pub quality_after: Option<ClusterQuality>,
}

/// Full training pipeline on `detector`. With `posttrain_cfg` absent only
/// the head training and head fit run.
pub fn run_pipeline(
    detector: &mut Detector,
    flows: &[LabeledFlow],
    train_cfg: &TrainConfig,
    posttrain_cfg: Option<&PosttrainConfig>,
) -> Result<PipelineOutcome> {
    let train = detector.train(flows, train_cfg)?;
    let Some(pt) = posttrain_cfg else {
        return Ok(PipelineOutcome {
            train,
            posttrain: None,
            quality_before: None,
            quality_after: None,
        });
    };
    let quality_before = training_quality(detector, flows, pt.seed)?;
    let report = posttrain(detector, flows, train_cfg, pt)?;
    let quality_after = training_quality(detector, flows, pt.seed)?;
    Ok(PipelineOutcome {
        train,
        posttrain: Some(report),
        quality_before: Some(quality_before),
        quality_after: Some(quality_after),
    })
}
