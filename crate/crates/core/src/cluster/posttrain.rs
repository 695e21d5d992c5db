//! Centroid post-training: extra epochs of the head loss plus lambda times
//! the squared distance of each penultimate vector to its label's centroid,
//! with centroids re-derived from a fresh k-means at every epoch.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::heads::{Detector, HeadType, UNKNOWN_TRAIN};
use crate::ingest::LabeledFlow;
use crate::neural::{HeadLoss, TrainConfig, Trainer};

use super::kmeans::kmeans;
use super::labels::label_centroids;
use super::quality::{completeness_homogeneity, ClusterQuality};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PosttrainConfig {
    pub lambda: f32,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for PosttrainConfig {
    fn default() -> Self {
        PosttrainConfig {
            lambda: 0.1,
            epochs: 5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PosttrainReport {
    pub epoch_losses: Vec<f64>,
}

fn known_flows<'a>(detector: &Detector, flows: &'a [LabeledFlow]) -> Vec<&'a LabeledFlow> {
    flows.iter().filter(|f| detector.class_index(&f.label).is_some()).collect()
}

/// Penultimate vectors of `flows`.
pub fn penultimate(detector: &Detector, flows: &[&LabeledFlow]) -> Result<Vec<Vec<f32>>> {
    flows
        .iter()
        .map(|f| Ok(detector.activations(&f.tensor)?.penultimate))
        .collect()
}

/// Fresh k = K clustering of the known training flows' penultimate vectors,
/// labeled by majority vote.
pub fn fresh_centroids(detector: &Detector, flows: &[LabeledFlow], seed: u64) -> Result<BTreeMap<String, Vec<f32>>> {
    let known = known_flows(detector, flows);
    let points = penultimate(detector, &known)?;
    let labels: Vec<String> = known.iter().map(|f| f.label.clone()).collect();
    let model = kmeans(&points, detector.classes().len(), seed)?;
    Ok(label_centroids(&model, &points, &labels)?
        .into_iter()
        .map(|c| (c.label, c.centroid))
        .collect())
}

/// Completeness and homogeneity of a k = K clustering of the known training
/// flows' particularized vectors against their labels.
pub fn training_quality(detector: &Detector, flows: &[LabeledFlow], seed: u64) -> Result<ClusterQuality> {
    let known = known_flows(detector, flows);
    let points: Vec<Vec<f32>> = known
        .iter()
        .map(|f| Ok(detector.particularized(&detector.activations(&f.tensor)?)))
        .collect::<Result<_>>()?;
    let labels: Vec<&str> = known.iter().map(|f| f.label.as_str()).collect();
    let model = kmeans(&points, detector.classes().len(), seed)?;
    completeness_homogeneity(&labels, &model.assignment)
}

/// Runs the post-train epochs on `detector`, then stores the final labeled
/// centroids and refits the head. Unknown-train flows keep their head loss
/// but take no centroid term.
pub fn posttrain(
    detector: &mut Detector,
    flows: &[LabeledFlow],
    train_cfg: &TrainConfig,
    cfg: &PosttrainConfig,
) -> Result<PosttrainReport> {
    let samples = detector.training_samples(flows)?;
    let head = HeadLoss::for_head(detector.params().arch.head);
    let mut trainer = Trainer::new(
        detector.params().clone(),
        &TrainConfig {
            seed: cfg.seed,
            ..train_cfg.clone()
        },
    )?;
    let mut report = PosttrainReport::default();
    for epoch in 0..cfg.epochs {
        detector.set_params(trainer.params().clone())?;
        let centroids = fresh_centroids(detector, flows, cfg.seed.wrapping_add(epoch as u64))?;
        let per_sample: Vec<Option<Vec<f32>>> = flows
            .iter()
            .map(|f| {
                if f.label == UNKNOWN_TRAIN {
                    None
                } else {
                    centroids.get(&f.label).cloned()
                }
            })
            .collect();
        let loss = trainer.run_epoch(&samples, head, Some((cfg.lambda, &per_sample)))?;
        tracing::debug!(epoch, loss, "post-train epoch");
        report.epoch_losses.push(loss);
    }
    detector.set_params(trainer.into_params())?;
    let centroids = fresh_centroids(detector, flows, cfg.seed.wrapping_add(cfg.epochs as u64))?;
    detector.set_centroids(centroids);
    if detector.head() == HeadType::OpenMax {
        detector.refit_head(flows)?;
    }
    Ok(report)
}
