//! Lloyd's k-means with k-means++ seeding, computed in f64.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MAX_ITERATIONS: usize = 300;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    /// Cluster id of every point.
    pub assignment: Vec<usize>,
    /// Sum of squared distances to the assigned centroids.
    pub inertia: f64,
    /// Inertia after every Lloyd iteration.
    pub history: Vec<f64>,
}

impl ClusterModel {
    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &a in &self.assignment {
            s[a] += 1;
        }
        s
    }

    /// Members of each cluster, in point order.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.k];
        for (i, &a) in self.assignment.iter().enumerate() {
            m[a].push(i);
        }
        m
    }
}

pub fn sq_dist(a: &[f64], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - *y as f64).powi(2)).sum()
}

/// Nearest centroid, ties to the lowest id.
pub fn nearest(centroids: &[Vec<f64>], p: &[f32]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(centroid, p);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

pub fn distinct_points(points: &[Vec<f32>]) -> usize {
    let mut keys: Vec<Vec<u32>> = points.iter().map(|p| p.iter().map(|x| x.to_bits()).collect()).collect();
    keys.sort_unstable();
    keys.dedup();
    keys.len()
}

fn to_f64(p: &[f32]) -> Vec<f64> {
    p.iter().map(|&x| x as f64).collect()
}

fn seed_plus_plus(points: &[Vec<f32>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids = vec![to_f64(&points[rng.random_range(0..points.len())])];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(&centroids[0], p)).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let mut r = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                pick = Some(i);
                if r < d {
                    break;
                }
                r -= d;
            }
        }
        let c = to_f64(&points[pick.expect("k does not exceed the distinct points")]);
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(&c, p));
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans(points: &[Vec<f32>], k: usize, seed: u64) -> Result<ClusterModel> {
    if k == 0 {
        return Err(Error::Invalid("k must be positive".into()));
    }
    let dim = points.first().map_or(0, Vec::len);
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::Shape {
            expected: format!("{dim}-dimensional points"),
            actual: "mixed dimensions".into(),
        });
    }
    let distinct = distinct_points(points);
    if k > distinct {
        return Err(Error::Invalid(format!("k = {k} exceeds the {distinct} distinct points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignment: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    for _ in 0..MAX_ITERATIONS {
        let mut next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p).0).collect();
        let mut sizes = vec![0usize; k];
        for &a in &next {
            sizes[a] += 1;
        }
        // Respawn empty clusters at the point farthest from its centroid.
        while let Some(empty) = sizes.iter().position(|&s| s == 0) {
            let far = (0..points.len())
                .filter(|&i| sizes[next[i]] > 1)
                .map(|i| (i, sq_dist(&centroids[next[i]], &points[i])))
                .fold(None, |best: Option<(usize, f64)>, (i, d)| match best {
                    Some((_, bd)) if bd >= d => best,
                    _ => Some((i, d)),
                })
                .expect("a cluster with two members exists")
                .0;
            sizes[next[far]] -= 1;
            next[far] = empty;
            sizes[empty] = 1;
            centroids[empty] = to_f64(&points[far]);
        }
        let mut sums = vec![vec![0.0; dim]; k];
        for (p, &a) in points.iter().zip(&next) {
            for (s, &x) in sums[a].iter_mut().zip(p) {
                *s += x as f64;
            }
        }
        for ((c, s), &n) in centroids.iter_mut().zip(sums).zip(&sizes) {
            *c = s.into_iter().map(|x| x / n as f64).collect();
        }
        let inertia: f64 = points.iter().zip(&next).map(|(p, &a)| sq_dist(&centroids[a], p)).sum();
        history.push(inertia);
        let done = next == assignment;
        assignment = next;
        if done {
            break;
        }
    }
    Ok(ClusterModel {
        k,
        centroids,
        inertia: *history.last().expect("at least one iteration"),
        assignment,
        history,
    })
}
