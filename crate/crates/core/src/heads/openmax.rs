//! OpenMax: per-class mean activation vectors, Weibull tails of the
//! distances to them, and recalibration of the top-ranked activations into
//! an extra unknown activation.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::weibull::{fit_weibull_mle, weibull_cdf};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Distance {
    Euclidean,
    Cosine,
    /// Euclidean / 200 + cosine distance.
    Eucos,
}

impl Distance {
    pub fn between(self, a: &[f32], b: &[f32]) -> f64 {
        let euclid = || a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt();
        let cosine = || {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| *x as f64 * *y as f64).sum();
            let na = a.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            let nb = b.iter().map(|x| (*x as f64).powi(2)).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                1.0
            } else {
                1.0 - dot / (na * nb)
            }
        };
        match self {
            Distance::Euclidean => euclid(),
            Distance::Cosine => cosine(),
            Distance::Eucos => euclid() / 200.0 + cosine(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OpenMaxConfig {
    /// Number of largest distances per class used for the Weibull fit.
    pub tail_size: usize,
    /// Number of top-ranked classes recalibrated.
    pub alpha: usize,
    pub distance: Distance,
    /// Minimum probability of the winning known class.
    pub threshold: f32,
}

impl Default for OpenMaxConfig {
    fn default() -> Self {
        OpenMaxConfig {
            tail_size: 20,
            alpha: 2,
            distance: Distance::Euclidean,
            threshold: 0.5,
        }
    }
}

impl OpenMaxConfig {
    pub fn validate(&self, classes: usize) -> Result<()> {
        if self.tail_size == 0 {
            return Err(Error::Config("openmax tail_size must be positive".into()));
        }
        if self.alpha == 0 || self.alpha > classes {
            return Err(Error::Config(format!("openmax alpha must be in 1..={classes}")));
        }
        if !(self.threshold >= 0.0 && self.threshold < 1.0) {
            return Err(Error::Config("openmax threshold must be in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Fitted tail model of one class. `cdf(d)` is 0 for `d <= shift`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeibullClassModel {
    pub mav: Vec<f32>,
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
}

impl WeibullClassModel {
    pub fn cdf(&self, distance: f64) -> f64 {
        weibull_cdf(distance - self.shift, self.shape, self.scale)
    }
}

pub fn mean_vector(vectors: &[Vec<f32>]) -> Vec<f32> {
    let dim = vectors.first().map_or(0, Vec::len);
    let mut acc = vec![0f64; dim];
    for v in vectors {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += *x as f64;
        }
    }
    acc.iter().map(|a| (a / vectors.len() as f64) as f32).collect()
}

/// Fits one tail model per class from the penultimate vectors of that
/// class's correctly classified training samples.
///
/// The tail is the `tail_size` largest distances to the MAV. It is shifted
/// so its smallest value sits one mean spacing (`spread / tail_size`) above
/// zero before the two-parameter fit; a tail with no spread gets a step
/// model that is 0 up to its distance and ~1 beyond.
pub fn openmax_fit(per_class: &[(String, Vec<Vec<f32>>)], cfg: &OpenMaxConfig) -> Result<Vec<WeibullClassModel>> {
    cfg.validate(per_class.len())?;
    per_class
        .iter()
        .map(|(class, vectors)| {
            if vectors.len() < cfg.tail_size {
                return Err(Error::InsufficientSamples {
                    class: class.clone(),
                    have: vectors.len(),
                    need: cfg.tail_size,
                });
            }
            let mav = mean_vector(vectors);
            let mut d: Vec<f64> = vectors.iter().map(|v| cfg.distance.between(v, &mav)).collect();
            d.sort_by(|a, b| b.partial_cmp(a).expect("finite distances"));
            let tail = &d[..cfg.tail_size];
            let (hi, lo) = (tail[0], tail[tail.len() - 1]);
            let spread = hi - lo;
            if spread <= f64::EPSILON * hi.max(1.0) || tail.len() < 2 {
                return Ok(WeibullClassModel {
                    mav,
                    shape: 1.0,
                    scale: 1e-9,
                    shift: hi,
                });
            }
            let shift = lo - spread / cfg.tail_size as f64;
            let shifted: Vec<f64> = tail.iter().map(|x| x - shift).collect();
            let fit = fit_weibull_mle(&shifted)?;
            Ok(WeibullClassModel {
                mav,
                shape: fit.shape,
                scale: fit.scale,
                shift,
            })
        })
        .collect()
}

/// Recalibrated known activations and the unknown activation.
#[derive(Debug, Clone, PartialEq)]
pub struct Recalibration {
    pub known: Vec<f64>,
    pub unknown: f64,
    /// Weibull CDF of each class's distance (0 outside the top alpha).
    pub weights: Vec<f64>,
}

/// Classes ranked by activation, highest first; ties go to the lower index.
pub fn rank_classes(v: &[f32]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[b].partial_cmp(&v[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    order
}

pub fn recalibrate(v: &[f32], models: &[WeibullClassModel], cfg: &OpenMaxConfig) -> Recalibration {
    let mut known: Vec<f64> = v.iter().map(|&x| x as f64).collect();
    let mut weights = vec![0.0; v.len()];
    let mut unknown = 0.0;
    let alpha = cfg.alpha.min(v.len());
    for (rank, &c) in rank_classes(v).iter().take(alpha).enumerate() {
        let rank_weight = (alpha - rank) as f64 / alpha as f64;
        let w = models[c].cdf(cfg.distance.between(v, &models[c].mav));
        weights[c] = w;
        let removed = known[c] * w * rank_weight;
        known[c] -= removed;
        unknown += removed;
    }
    Recalibration {
        known,
        unknown,
        weights,
    }
}

/// Softmax over the K recalibrated activations followed by the unknown one.
pub fn openmax_probabilities(r: &Recalibration) -> Vec<f64> {
    let all: Vec<f64> = r.known.iter().copied().chain(std::iter::once(r.unknown)).collect();
    let m = all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = all.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|x| x / s).collect()
}
