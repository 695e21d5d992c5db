//! Line-delimited cluster reports of buffered novelty flows.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::kmeans::nearest;
use super::quality::{select_k, silhouette};

pub const MAX_NOVELTY_K: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterRecord {
    pub id: usize,
    pub size: usize,
    pub centroid: Vec<f32>,
    pub members: Vec<String>,
    /// Silhouette of the whole clustering this cluster came from.
    pub silhouette: f64,
    /// Known class whose labeled centroid is nearest, when centroids exist.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nearest_known: Option<String>,
}

/// Clusters novelty vectors with k chosen by silhouette over 1..=8.
/// `known_centroids` feeds the nearest-known-class hint.
pub fn cluster_novelties(
    ids: &[String],
    points: &[Vec<f32>],
    known_centroids: &[(String, Vec<f32>)],
    seed: u64,
) -> Result<Vec<ClusterRecord>> {
    if ids.len() != points.len() {
        return Err(Error::Shape {
            expected: format!("{} ids", points.len()),
            actual: ids.len().to_string(),
        });
    }
    let sel = select_k(points, 1..=MAX_NOVELTY_K, seed)?;
    let score = silhouette(points, &sel.model.assignment);
    let known: Vec<Vec<f64>> = known_centroids
        .iter()
        .map(|(_, c)| c.iter().map(|&x| x as f64).collect())
        .collect();
    Ok(sel
        .model
        .members()
        .into_iter()
        .zip(&sel.model.centroids)
        .enumerate()
        .filter(|(_, (m, _))| !m.is_empty())
        .map(|(id, (m, c))| {
            let centroid: Vec<f32> = c.iter().map(|&x| x as f32).collect();
            ClusterRecord {
                id,
                size: m.len(),
                nearest_known: (!known.is_empty()).then(|| known_centroids[nearest(&known, &centroid).0].0.clone()),
                centroid,
                members: m.iter().map(|&i| ids[i].clone()).collect(),
                silhouette: score,
            }
        })
        .collect())
}

pub fn write_cluster_report(path: &Path, records: &[ClusterRecord]) -> Result<()> {
    let mut out = Vec::new();
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| Error::Invalid(e.to_string()))?;
        out.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&out).map_err(|e| Error::io(path, e))
}

pub fn read_cluster_report(path: &Path) -> Result<Vec<ClusterRecord>> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Malformed {
            location: format!("{}:{}", path.display(), n + 1),
            reason: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clusters_and_round_trips() {
        let mut points = Vec::new();
        let mut ids = Vec::new();
        for i in 0..30 {
            let base = if i % 2 == 0 { 0.0 } else { 8.0 };
            points.push(vec![base + (i as f32) * 0.01, base]);
            ids.push(format!("f{i}"));
        }
        let known = vec![("near-zero".to_string(), vec![0.0, 0.0]), ("far".to_string(), vec![9.0, 9.0])];
        let recs = cluster_novelties(&ids, &points, &known, 3).unwrap();
        assert_eq!(recs.len(), 2);
        assert_eq!(recs.iter().map(|r| r.size).sum::<usize>(), 30);
        assert!(recs.iter().any(|r| r.nearest_known.as_deref() == Some("near-zero")));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("clusters.jsonl");
        write_cluster_report(&p, &recs).unwrap();
        assert_eq!(read_cluster_report(&p).unwrap(), recs);
    }
}
