use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::input::SparseInput;
use super::loss::Target;
use super::network::{HeadLoss, LossSpec};
use super::optim::{Adam, AdamConfig};
use super::params::ModelParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f32,
    pub beta1: f32,
    pub beta2: f32,
    pub epsilon: f32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: adam.learning_rate,
            beta1: adam.beta1,
            beta2: adam.beta2,
            epsilon: adam.epsilon,
            seed: 0,
        }
    }
}

impl TrainConfig {
    fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

#[derive(Debug, Clone)]
pub struct TrainSample {
    pub input: SparseInput,
    pub target: Target,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Mean per-sample loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Owns the parameters and optimizer state of one training run.
pub struct Trainer {
    params: ModelParams,
    adam: Adam,
    rng: ChaCha8Rng,
    cfg: TrainConfig,
    epoch: usize,
}

impl Trainer {
    pub fn new(params: ModelParams, cfg: &TrainConfig) -> Result<Self> {
        if cfg.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(Trainer {
            adam: Adam::new(cfg.adam(), &params),
            params,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            cfg: cfg.clone(),
            epoch: 0,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn into_params(self) -> ModelParams {
        self.params
    }

    /// One shuffled pass over `samples`. `centroids`, when given, holds one
    /// optional centroid per sample for the post-train term.
    pub fn run_epoch(
        &mut self,
        samples: &[TrainSample],
        head: HeadLoss,
        posttrain: Option<(f32, &[Option<Vec<f32>>])>,
    ) -> Result<f64> {
        if samples.is_empty() {
            return Err(Error::Training("empty dataset".into()));
        }
        let mut order: Vec<usize> = (0..samples.len()).collect();
        order.shuffle(&mut self.rng);
        let mut total = 0.0;
        for (b, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let inputs: Vec<&SparseInput> = chunk.iter().map(|&i| &samples[i].input).collect();
            let targets: Vec<Target> = chunk.iter().map(|&i| samples[i].target).collect();
            let batch_centroids: Option<Vec<Option<Vec<f32>>>> =
                posttrain.map(|(_, c)| chunk.iter().map(|&i| c[i].clone()).collect());
            let spec = LossSpec {
                head,
                posttrain: posttrain.zip(batch_centroids.as_deref()).map(|((l, _), c)| (l, c)),
            };
            let (loss, grad) = self.params.backward_refs(&inputs, &targets, &spec)?;
            if !loss.is_finite() {
                return Err(Error::Training(format!(
                    "non-finite loss {loss} at epoch {} batch {b}",
                    self.epoch
                )));
            }
            self.adam.step(&mut self.params, &grad, 1.0 / chunk.len() as f32);
            if !self.params.all_finite() {
                return Err(Error::Training(format!(
                    "non-finite parameters after epoch {} batch {b}",
                    self.epoch
                )));
            }
            total += loss;
        }
        self.epoch += 1;
        Ok(total / samples.len() as f64)
    }
}

/// Trains with the head's own loss for `cfg.epochs` epochs.
pub fn train(params: ModelParams, samples: &[TrainSample], cfg: &TrainConfig) -> Result<(ModelParams, TrainReport)> {
    if samples.is_empty() {
        return Err(Error::Training("empty dataset".into()));
    }
    let head = HeadLoss::for_head(params.arch.head);
    let mut trainer = Trainer::new(params, cfg)?;
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let loss = trainer.run_epoch(samples, head, None)?;
        tracing::debug!(epoch, loss, "epoch done");
        report.epoch_losses.push(loss);
    }
    Ok((trainer.into_params(), report))
}
