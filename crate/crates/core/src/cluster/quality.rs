//! Clustering quality: entropy-based completeness/homogeneity and the
//! silhouette coefficient.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kmeans::{distinct_points, kmeans, ClusterModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClusterQuality {
    pub completeness: f64,
    pub homogeneity: f64,
}

fn entropy(counts: impl Iterator<Item = usize>, n: f64) -> f64 {
    counts
        .filter(|&c| c > 0)
        .map(|c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Natural-log entropies; a ratio with a zero denominator scores 1.
pub fn completeness_homogeneity<L: Ord>(classes: &[L], clusters: &[usize]) -> Result<ClusterQuality> {
    if classes.len() != clusters.len() {
        return Err(Error::Shape {
            expected: format!("{} cluster ids", classes.len()),
            actual: clusters.len().to_string(),
        });
    }
    if classes.is_empty() {
        return Err(Error::Invalid("quality of an empty clustering".into()));
    }
    let n = classes.len() as f64;
    let mut joint: BTreeMap<(&L, usize), usize> = BTreeMap::new();
    let mut by_class: BTreeMap<&L, usize> = BTreeMap::new();
    let mut by_cluster: BTreeMap<usize, usize> = BTreeMap::new();
    for (l, &c) in classes.iter().zip(clusters) {
        *joint.entry((l, c)).or_default() += 1;
        *by_class.entry(l).or_default() += 1;
        *by_cluster.entry(c).or_default() += 1;
    }
    let h_class = entropy(by_class.values().copied(), n);
    let h_cluster = entropy(by_cluster.values().copied(), n);
    let h_joint = entropy(joint.values().copied(), n);
    // H(class|cluster) = H(class, cluster) - H(cluster), and symmetrically.
    let homogeneity = if h_class == 0.0 {
        1.0
    } else {
        1.0 - (h_joint - h_cluster) / h_class
    };
    let completeness = if h_cluster == 0.0 {
        1.0
    } else {
        1.0 - (h_joint - h_class) / h_cluster
    };
    Ok(ClusterQuality {
        completeness: completeness.clamp(0.0, 1.0),
        homogeneity: homogeneity.clamp(0.0, 1.0),
    })
}

fn dist(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (*x as f64 - *y as f64).powi(2)).sum::<f64>().sqrt()
}

/// Mean silhouette coefficient. Points in singleton clusters score 0, as
/// does a single-cluster partition.
pub fn silhouette(points: &[Vec<f32>], assignment: &[usize]) -> f64 {
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    if k < 2 || points.is_empty() {
        return 0.0;
    }
    let mut sizes = vec![0usize; k];
    for &a in assignment {
        sizes[a] += 1;
    }
    let mut total = 0.0;
    for (i, p) in points.iter().enumerate() {
        let own = assignment[i];
        if sizes[own] <= 1 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for (q, &c) in points.iter().zip(assignment) {
            sums[c] += dist(p, q);
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        if b.is_finite() {
            let m = a.max(b);
            if m > 0.0 {
                total += (b - a) / m;
            }
        }
    }
    total / points.len() as f64
}

/// Above this many points the silhouette is computed on a seeded subsample.
pub const SILHOUETTE_SAMPLE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelection {
    pub model: ClusterModel,
    /// Silhouette of every candidate k that was tried.
    pub scores: Vec<(usize, f64)>,
}

/// k-means for every k in `ks` (capped by the distinct points), keeping the
/// best silhouette; ties go to the smaller k.
pub fn select_k(points: &[Vec<f32>], ks: std::ops::RangeInclusive<usize>, seed: u64) -> Result<KSelection> {
    let distinct = distinct_points(points);
    if points.is_empty() {
        return Err(Error::Invalid("cannot cluster zero points".into()));
    }
    let sample: Option<Vec<usize>> = (points.len() > SILHOUETTE_SAMPLE).then(|| {
        let mut idx: Vec<usize> = (0..points.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(SILHOUETTE_SAMPLE);
        idx.sort_unstable();
        idx
    });
    let mut best: Option<(f64, ClusterModel)> = None;
    let mut scores = Vec::new();
    for k in ks.filter(|&k| k >= 1 && k <= distinct) {
        let model = kmeans(points, k, seed)?;
        let score = match &sample {
            Some(idx) => {
                let p: Vec<Vec<f32>> = idx.iter().map(|&i| points[i].clone()).collect();
                let a: Vec<usize> = idx.iter().map(|&i| model.assignment[i]).collect();
                silhouette(&p, &a)
            }
            None => silhouette(points, &model.assignment),
        };
        scores.push((k, score));
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, model));
        }
    }
    let (_, model) = best.ok_or_else(|| Error::Invalid("no admissible k".into()))?;
    Ok(KSelection { model, scores })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn reference_partitions() {
        let q = completeness_homogeneity(&["a", "a", "b", "b"], &[1, 1, 0, 0]).unwrap();
        assert_eq!((q.completeness, q.homogeneity), (1.0, 1.0));
        let q = completeness_homogeneity(&["a", "a", "b", "b"], &[0, 0, 0, 0]).unwrap();
        assert_eq!((q.completeness, q.homogeneity), (1.0, 0.0));
        // Singletons: H(cluster|class) = ln 2 of H(cluster) = ln 4, so
        // completeness is ln 2 / ln n and only tends to 0 as n grows.
        let q = completeness_homogeneity(&["a", "a", "b", "b"], &[0, 1, 2, 3]).unwrap();
        assert!((q.completeness - 0.5).abs() < 1e-12 && q.homogeneity == 1.0);
        let classes: Vec<usize> = (0..64).map(|i| i % 2).collect();
        let singletons: Vec<usize> = (0..64).collect();
        let q = completeness_homogeneity(&classes, &singletons).unwrap();
        assert!((q.completeness - 2f64.ln() / 64f64.ln()).abs() < 1e-12);
        assert!(completeness_homogeneity(&["a"], &[0, 1]).is_err());
    }

    #[test]
    fn silhouette_of_separated_groups_is_high() {
        let pts = vec![vec![0.0], vec![0.1], vec![10.0], vec![10.1]];
        assert!(silhouette(&pts, &[0, 0, 1, 1]) > 0.98);
        assert_eq!(silhouette(&pts, &[0, 0, 0, 0]), 0.0);
        let sel = select_k(&pts, 1..=8, 0).unwrap();
        assert_eq!(sel.model.k, 2);
        assert_eq!(sel.scores.len(), 4);
    }

    proptest! {
        #[test]
        fn bounded_and_permutation_invariant(rows in proptest::collection::vec((0u8..3, 0usize..4), 1..30)) {
            let classes: Vec<u8> = rows.iter().map(|r| r.0).collect();
            let clusters: Vec<usize> = rows.iter().map(|r| r.1).collect();
            let q = completeness_homogeneity(&classes, &clusters).unwrap();
            prop_assert!((0.0..=1.0).contains(&q.completeness) && (0.0..=1.0).contains(&q.homogeneity));
            let renamed: Vec<u8> = classes.iter().map(|c| (c + 1) % 3).collect();
            let relabeled: Vec<usize> = clusters.iter().map(|c| 3 - c).collect();
            let r = completeness_homogeneity(&renamed, &relabeled).unwrap();
            prop_assert!((q.completeness - r.completeness).abs() < 1e-12);
            prop_assert!((q.homogeneity - r.homogeneity).abs() < 1e-12);
        }
    }
}
