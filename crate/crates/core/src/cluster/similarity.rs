//! Which labels look alike: from cross-experiment misclassifications and
//! from co-clustering of held-out labels.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::heads::NoveltyTally;

pub const ACCEPT_THRESHOLD: f64 = 0.70;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarLabel {
    pub label: String,
    pub percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityGroup {
    pub label: String,
    pub experiments: usize,
    /// Share of experiments whose rejection rate reached the threshold.
    pub accepted_percent: f64,
    /// Known classes that absorbed the most flows in the remaining
    /// experiments, by share of all experiments, highest first.
    pub similar: Vec<SimilarLabel>,
}

impl SimilarityGroup {
    pub fn group(&self) -> BTreeSet<String> {
        self.similar.iter().map(|s| s.label.clone()).collect()
    }
}

fn ranked(counts: BTreeMap<String, usize>, total: usize) -> Vec<SimilarLabel> {
    let mut v: Vec<SimilarLabel> = counts
        .into_iter()
        .map(|(label, n)| SimilarLabel {
            label,
            percent: 100.0 * n as f64 / total as f64,
        })
        .collect();
    v.sort_by(|a, b| b.percent.total_cmp(&a.percent).then_with(|| a.label.cmp(&b.label)));
    v
}

/// Groups experiments by novelty label. An experiment rejecting at least
/// `accept_threshold` of the novelty flows is accepted; otherwise the known
/// class that absorbed most of them (ties to the smallest name) is recorded.
pub fn similarity_by_misclassification(experiments: &[NoveltyTally], accept_threshold: f64) -> Vec<SimilarityGroup> {
    let mut by_label: BTreeMap<&str, Vec<&NoveltyTally>> = BTreeMap::new();
    for e in experiments {
        by_label.entry(&e.label).or_default().push(e);
    }
    by_label
        .into_iter()
        .map(|(label, runs)| {
            let mut accepted = 0;
            let mut top: BTreeMap<String, usize> = BTreeMap::new();
            for r in &runs {
                if r.total == 0 || r.rejected as f64 >= accept_threshold * r.total as f64 {
                    accepted += 1;
                    continue;
                }
                let winner = r.absorbed.iter().fold(None, |best: Option<(&String, usize)>, (c, &n)| match best {
                    Some((_, bn)) if bn >= n => best,
                    _ => Some((c, n)),
                });
                if let Some((c, _)) = winner {
                    *top.entry(c.clone()).or_default() += 1;
                }
            }
            SimilarityGroup {
                label: label.to_string(),
                experiments: runs.len(),
                accepted_percent: 100.0 * accepted as f64 / runs.len() as f64,
                similar: ranked(top, runs.len()),
            }
        })
        .collect()
}

/// One clustering of the pooled samples of several held-out labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoClusterRun {
    /// (label, cluster id) of every sample.
    pub samples: Vec<(String, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoClusterSimilarity {
    pub label: String,
    /// Other labels sharing this label's dominant cluster, by share of the
    /// runs in which both appeared.
    pub similar: Vec<SimilarLabel>,
}

/// Each label's dominant cluster in a run is where most of its samples
/// landed (ties to the lowest id); two labels co-cluster in a run when their
/// dominant clusters coincide.
pub fn similarity_by_clustering(runs: &[CoClusterRun]) -> Vec<CoClusterSimilarity> {
    let mut together: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut seen: BTreeMap<(String, String), usize> = BTreeMap::new();
    let mut labels: BTreeSet<String> = BTreeSet::new();
    for run in runs {
        let mut votes: BTreeMap<&str, BTreeMap<usize, usize>> = BTreeMap::new();
        for (l, c) in &run.samples {
            *votes.entry(l).or_default().entry(*c).or_default() += 1;
        }
        let dominant: Vec<(&str, usize)> = votes
            .iter()
            .map(|(l, v)| {
                let c = v
                    .iter()
                    .fold((usize::MAX, 0), |b, (&c, &n)| if n > b.1 { (c, n) } else { b })
                    .0;
                (*l, c)
            })
            .collect();
        for &(a, ca) in &dominant {
            labels.insert(a.to_string());
            for &(b, cb) in &dominant {
                if a == b {
                    continue;
                }
                let key = (a.to_string(), b.to_string());
                *seen.entry(key.clone()).or_default() += 1;
                if ca == cb {
                    *together.entry(key).or_default() += 1;
                }
            }
        }
    }
    labels
        .into_iter()
        .map(|label| {
            let mut similar: Vec<SimilarLabel> = seen
                .iter()
                .filter(|((a, _), _)| *a == label)
                .filter_map(|((_, b), &n)| {
                    let t = together.get(&(label.clone(), b.clone())).copied().unwrap_or(0);
                    (t > 0).then(|| SimilarLabel {
                        label: b.clone(),
                        percent: 100.0 * t as f64 / n as f64,
                    })
                })
                .collect();
            similar.sort_by(|a, b| b.percent.total_cmp(&a.percent).then_with(|| a.label.cmp(&b.label)));
            CoClusterSimilarity { label, similar }
        })
        .collect()
}
