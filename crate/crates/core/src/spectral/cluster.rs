//! Spectral clustering of vertices into latent communities/categories.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Side, SpectralFeatures};
use crate::error::{Error, Result};
use crate::matrix::DenseMatrix;

const MAX_ITERS: usize = 100;
const SHIFT_TOL: f64 = 1e-6;

/// Vertex-to-cluster assignment with the converged centroids.
#[derive(Debug, Clone)]
pub struct ClusterAssignment {
    pub labels: Vec<u32>,
    pub n_clusters: usize,
    pub centroids: DenseMatrix,
    pub side: Side,
}

impl ClusterAssignment {
    /// Per-cluster sorted member lists.
    pub fn members(&self) -> Vec<Vec<u32>> {
        let mut out = vec![Vec::new(); self.n_clusters];
        for (v, &c) in self.labels.iter().enumerate() {
            out[c as usize].push(v as u32);
        }
        out
    }
}

/// Clusters vertices by their L2-row-normalized spectral features.
pub fn cluster_vertices(
    features: &SpectralFeatures,
    n_clusters: usize,
    seed: u64,
) -> Result<ClusterAssignment> {
    cluster_rows(&features.features, n_clusters, seed, features.side)
}

/// K-means over L2-normalized rows of an arbitrary feature matrix, with
/// seeded k-means++ initialization. All-zero rows stay zero and fall to the
/// lowest-index nearest centroid under ties.
pub fn cluster_rows(
    features: &DenseMatrix,
    n_clusters: usize,
    seed: u64,
    side: Side,
) -> Result<ClusterAssignment> {
    let n = features.rows();
    let dim = features.cols();
    if n_clusters == 0 || n_clusters > n {
        return Err(Error::InvalidArgument(format!(
            "cannot form {n_clusters} clusters from {n} vertices"
        )));
    }

    let mut points = DenseMatrix::zeros(n, dim);
    for v in 0..n {
        let row = features.row(v);
        let norm = row.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            for (j, &x) in row.iter().enumerate() {
                points.set(v, j, x / norm);
            }
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeanspp_init(&points, n_clusters, &mut rng);
    let mut labels = vec![0u32; n];

    for _iter in 0..MAX_ITERS {
        assign(&points, &centroids, &mut labels);
        refill_empty_clusters(&points, &centroids, &mut labels, n_clusters);

        // Recompute centroids as member means.
        let mut next = DenseMatrix::zeros(n_clusters, dim);
        let mut counts = vec![0usize; n_clusters];
        for (v, &c) in labels.iter().enumerate() {
            counts[c as usize] += 1;
            let row = points.row(v);
            for (j, &x) in row.iter().enumerate() {
                *next.row_mut(c as usize).get_mut(j).unwrap() += x;
            }
        }
        let mut shift = 0.0f64;
        for c in 0..n_clusters {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for j in 0..dim {
                    let val = next.get(c, j) * inv;
                    next.set(c, j, val);
                }
            } else {
                // Refill guarantees non-empty unless n_clusters > distinct
                // points; keep the previous centroid in that case.
                for j in 0..dim {
                    next.set(c, j, centroids.get(c, j));
                }
            }
            let d: f64 = (0..dim)
                .map(|j| {
                    let diff = next.get(c, j) - centroids.get(c, j);
                    diff * diff
                })
                .sum();
            shift = shift.max(d.sqrt());
        }
        centroids = next;
        if shift <= SHIFT_TOL {
            break;
        }
    }
    assign(&points, &centroids, &mut labels);
    refill_empty_clusters(&points, &centroids, &mut labels, n_clusters);

    Ok(ClusterAssignment {
        labels,
        n_clusters,
        centroids,
        side,
    })
}

/// k-means++: first center sampled uniformly, the rest proportional to the
/// squared distance from the nearest chosen center.
fn kmeanspp_init(points: &DenseMatrix, k: usize, rng: &mut ChaCha8Rng) -> DenseMatrix {
    let n = points.rows();
    let dim = points.cols();
    let mut centroids = DenseMatrix::zeros(k, dim);
    let mut chosen = vec![false; n];

    let first = rng.gen_range(0..n);
    centroids.row_mut(0).copy_from_slice(points.row(first));
    chosen[first] = true;

    let mut dist2: Vec<f64> = (0..n)
        .map(|v| squared_distance(points.row(v), centroids.row(0)))
        .collect();

    for c in 1..k {
        let total: f64 = dist2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.gen_range(0.0..total);
            let mut pick = None;
            for (v, &d) in dist2.iter().enumerate() {
                if d > 0.0 {
                    if target < d {
                        pick = Some(v);
                        break;
                    }
                    target -= d;
                }
            }
            pick.unwrap_or_else(|| dist2.iter().position(|&d| d > 0.0).unwrap())
        } else {
            // All remaining points coincide with chosen centers; take the
            // first unchosen index.
            (0..n).find(|&v| !chosen[v]).unwrap_or(0)
        };
        chosen[pick] = true;
        centroids.row_mut(c).copy_from_slice(points.row(pick));
        for v in 0..n {
            let d = squared_distance(points.row(v), centroids.row(c));
            if d < dist2[v] {
                dist2[v] = d;
            }
        }
    }
    centroids
}

fn assign(points: &DenseMatrix, centroids: &DenseMatrix, labels: &mut [u32]) {
    for v in 0..points.rows() {
        let row = points.row(v);
        let mut best = 0u32;
        let mut best_d = f64::INFINITY;
        for c in 0..centroids.rows() {
            let d = squared_distance(row, centroids.row(c));
            // Strict improvement keeps the lowest index on ties.
            if d < best_d {
                best_d = d;
                best = c as u32;
            }
        }
        labels[v] = best;
    }
}

/// Moves, for each empty cluster, the point farthest from its current
/// centroid into the empty cluster.
fn refill_empty_clusters(
    points: &DenseMatrix,
    centroids: &DenseMatrix,
    labels: &mut [u32],
    n_clusters: usize,
) {
    loop {
        let mut counts = vec![0usize; n_clusters];
        for &c in labels.iter() {
            counts[c as usize] += 1;
        }
        let empty = match counts.iter().position(|&c| c == 0) {
            Some(c) => c,
            None => return,
        };
        let mut farthest = None;
        let mut farthest_d = -1.0;
        for (v, &c) in labels.iter().enumerate() {
            // Only donors from clusters with at least two members.
            if counts[c as usize] < 2 {
                continue;
            }
            let d = squared_distance(points.row(v), centroids.row(c as usize));
            if d > farthest_d {
                farthest_d = d;
                farthest = Some(v);
            }
        }
        match farthest {
            Some(v) => labels[v] = empty as u32,
            None => return, // every cluster is a singleton already
        }
    }
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}
