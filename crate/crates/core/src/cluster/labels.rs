//! Assigning class labels to cluster centroids.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kmeans::ClusterModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCentroid {
    pub label: String,
    pub centroid: Vec<f32>,
}

/// One centroid per label. Every cluster takes the majority label of its
/// members (ties to the lexicographically smallest). A label that wins
/// several clusters gets the mean of their members; a label that wins none
/// gets the mean of its own samples. Empty clusters are skipped.
pub fn label_centroids(model: &ClusterModel, points: &[Vec<f32>], labels: &[String]) -> Result<Vec<LabeledCentroid>> {
    if points.len() != labels.len() || points.len() != model.assignment.len() {
        return Err(Error::Shape {
            expected: format!("{} points and labels", model.assignment.len()),
            actual: format!("{} points, {} labels", points.len(), labels.len()),
        });
    }
    let dim = points.first().map_or(0, Vec::len);
    let members = model.members();
    let mut won: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (c, m) in members.iter().enumerate() {
        if m.is_empty() {
            tracing::warn!(cluster = c, "empty cluster dropped");
            continue;
        }
        let mut votes: BTreeMap<&str, usize> = BTreeMap::new();
        for &i in m {
            *votes.entry(labels[i].as_str()).or_default() += 1;
        }
        let winner = votes
            .iter()
            .fold(None, |best: Option<(&str, usize)>, (l, &n)| match best {
                Some((_, bn)) if bn >= n => best,
                _ => Some((l, n)),
            })
            .expect("non-empty cluster")
            .0;
        won.entry(winner).or_default().extend(m.iter().copied());
    }
    let mut all: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, l) in labels.iter().enumerate() {
        all.entry(l.as_str()).or_default().push(i);
    }
    Ok(all
        .iter()
        .map(|(label, own)| {
            let idx = won.get(label).unwrap_or(own);
            let mut c = vec![0.0f64; dim];
            for &i in idx {
                for (s, &x) in c.iter_mut().zip(&points[i]) {
                    *s += x as f64;
                }
            }
            LabeledCentroid {
                label: label.to_string(),
                centroid: c.iter().map(|s| (s / idx.len() as f64) as f32).collect(),
            }
        })
        .collect())
}
