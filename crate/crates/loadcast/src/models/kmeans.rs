//! One-dimensional K-Means over kWh targets, used to discretize the
//! regression target into at most k classes for the classifier families.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Sorted, distinct cluster centroids; a value belongs to the nearest one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KMeansCodebook {
    centroids: Vec<f64>,
}

impl KMeansCodebook {
    /// Lloyd's algorithm with farthest-point seeding. Fewer than k distinct
    /// targets short-circuit to those values as the codebook.
    pub fn fit(y: &[f64], k: usize, max_iter: usize, seed: u64) -> Self {
        assert!(!y.is_empty(), "codebook needs at least one target");
        assert!(k >= 1, "k must be at least 1");
        let mut distinct = y.to_vec();
        distinct.sort_by(f64::total_cmp);
        distinct.dedup();
        if distinct.len() <= k {
            return Self { centroids: distinct };
        }

        // farthest-point seeding: random first pick, then repeatedly the
        // value furthest from its nearest chosen centroid
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut centroids = vec![y[rng.gen_range(0..y.len())]];
        while centroids.len() < k {
            let far = distinct
                .iter()
                .copied()
                .max_by(|a, b| {
                    let da = nearest_distance(&centroids, *a);
                    let db = nearest_distance(&centroids, *b);
                    da.total_cmp(&db)
                })
                .expect("distinct non-empty");
            centroids.push(far);
        }

        let mut assignment = vec![usize::MAX; y.len()];
        for _ in 0..max_iter {
            let mut changed = false;
            for (i, &v) in y.iter().enumerate() {
                let c = nearest_index(&centroids, v);
                if assignment[i] != c {
                    assignment[i] = c;
                    changed = true;
                }
            }
            if !changed {
                break;
            }
            let mut sums = vec![0.0; centroids.len()];
            let mut counts = vec![0usize; centroids.len()];
            for (i, &v) in y.iter().enumerate() {
                sums[assignment[i]] += v;
                counts[assignment[i]] += 1;
            }
            for (c, centroid) in centroids.iter_mut().enumerate() {
                // a cluster that lost all members keeps its position
                if counts[c] > 0 {
                    *centroid = sums[c] / counts[c] as f64;
                }
            }
        }

        centroids.sort_by(f64::total_cmp);
        centroids.dedup();
        Self { centroids }
    }

    pub fn centroids(&self) -> &[f64] {
        &self.centroids
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }

    /// Index of the nearest centroid; ties break toward the lower index.
    pub fn assign(&self, value: f64) -> usize {
        nearest_index(&self.centroids, value)
    }

    pub fn centroid(&self, label: usize) -> f64 {
        self.centroids[label]
    }

    pub fn labels(&self, y: &[f64]) -> Vec<usize> {
        y.iter().map(|&v| self.assign(v)).collect()
    }

    /// Within-cluster sum of squared distances.
    pub fn sse(&self, y: &[f64]) -> f64 {
        y.iter().map(|&v| (v - self.centroid(self.assign(v))).powi(2)).sum()
    }
}

fn nearest_index(centroids: &[f64], value: f64) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, &c) in centroids.iter().enumerate() {
        let d = (value - c).abs();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

fn nearest_distance(centroids: &[f64], value: f64) -> f64 {
    centroids.iter().map(|&c| (value - c).abs()).fold(f64::INFINITY, f64::min)
}
