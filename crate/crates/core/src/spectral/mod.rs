//! Hypergraph Laplacians, spectral features, and latent-community
//! clustering.
//!
//! Both sides of the interaction matrix induce a hypergraph: on the user
//! side vertices are users and each item's buyer set is a hyperedge
//! (incidence H = R); on the item side vertices are items and each user's
//! purchase set is a hyperedge (H = R transposed). The normalized Laplacian
//!
//!   L = D^{-1/2} (D - H W Delta^{-1} H^T) D^{-1/2}
//!
//! is symmetric positive semidefinite with spectrum in [0, 1]; its
//! smallest-K eigenvectors embed vertices so that strongly connected
//! vertices land close together.

mod cluster;
mod eigen;
pub mod io;

pub use cluster::{cluster_rows, cluster_vertices, ClusterAssignment};
pub use eigen::{smallest_eigenpairs, spectral_features};

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::matrix::{CsrMatrix, DenseMatrix};

/// Which side of the interaction matrix a spectral object describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    User,
    Item,
}

impl Side {
    pub fn as_str(self) -> &'static str {
        match self {
            Side::User => "user",
            Side::Item => "item",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "user" => Ok(Side::User),
            "item" => Ok(Side::Item),
            other => Err(Error::InvalidArgument(format!("unknown side {other:?}"))),
        }
    }
}

/// Normalized hypergraph Laplacian with the diagonals it was built from.
///
/// Incidence is stored twice (vertex-major and hyperedge-major) so both
/// Laplacian assembly and neighborhood walks are cheap. Zero-degree
/// vertices get all-zero Laplacian rows/columns; zero-degree hyperedges
/// contribute nothing.
#[derive(Debug, Clone)]
pub struct HypergraphLaplacian {
    n_vertices: usize,
    n_hyperedges: usize,
    /// Per-vertex sorted list of incident hyperedges.
    vertex_edges: Vec<Vec<u32>>,
    /// Per-hyperedge sorted list of member vertices.
    edge_vertices: Vec<Vec<u32>>,
    /// D: per-vertex sum of incident hyperedge weights.
    vertex_degrees: Vec<f64>,
    /// W: hyperedge weights (all ones unless supplied).
    hyperedge_weights: Vec<f64>,
    /// Delta: vertices per hyperedge.
    hyperedge_degrees: Vec<f64>,
    laplacian: CsrMatrix,
    side: Side,
}

impl HypergraphLaplacian {
    pub fn n_vertices(&self) -> usize {
        self.n_vertices
    }

    pub fn n_hyperedges(&self) -> usize {
        self.n_hyperedges
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn vertex_degrees(&self) -> &[f64] {
        &self.vertex_degrees
    }

    pub fn hyperedge_weights(&self) -> &[f64] {
        &self.hyperedge_weights
    }

    pub fn hyperedge_degrees(&self) -> &[f64] {
        &self.hyperedge_degrees
    }

    pub fn vertex_edges(&self, v: usize) -> &[u32] {
        &self.vertex_edges[v]
    }

    pub fn edge_vertices(&self, e: usize) -> &[u32] {
        &self.edge_vertices[e]
    }

    pub fn laplacian(&self) -> &CsrMatrix {
        &self.laplacian
    }
}

/// Builds the normalized hypergraph Laplacian for one side of the
/// interaction matrix. `weights`, when given, must hold one positive weight
/// per hyperedge.
pub fn build_laplacian(
    matrix: &InteractionMatrix,
    side: Side,
    weights: Option<Vec<f64>>,
) -> Result<HypergraphLaplacian> {
    if matrix.n_records() == 0 {
        return Err(Error::InvalidArgument(
            "cannot build a Laplacian from an empty interaction matrix".into(),
        ));
    }
    let (vertex_edges, edge_vertices) = match side {
        Side::User => (matrix.items_by_user(), matrix.users_by_item()),
        Side::Item => (matrix.users_by_item(), matrix.items_by_user()),
    };
    let n_vertices = vertex_edges.len();
    let n_hyperedges = edge_vertices.len();

    let weights = match weights {
        Some(w) => {
            if w.len() != n_hyperedges {
                return Err(Error::InvalidArgument(format!(
                    "expected {} hyperedge weights, got {}",
                    n_hyperedges,
                    w.len()
                )));
            }
            if w.iter().any(|&x| x.is_nan() || x <= 0.0) {
                return Err(Error::InvalidArgument(
                    "hyperedge weights must be positive".into(),
                ));
            }
            w
        }
        None => vec![1.0; n_hyperedges],
    };

    let hyperedge_degrees: Vec<f64> = edge_vertices.iter().map(|m| m.len() as f64).collect();
    let vertex_degrees: Vec<f64> = vertex_edges
        .iter()
        .map(|edges| edges.iter().map(|&e| weights[e as usize]).sum())
        .collect();
    let inv_sqrt_degree: Vec<f64> = vertex_degrees
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();

    // Accumulate S = H W Delta^{-1} H^T on the upper triangle only, per
    // hyperedge in index order, then emit each value mirrored so L is
    // symmetric exactly.
    use std::collections::HashMap;
    let mut upper: HashMap<(u32, u32), f64> = HashMap::new();
    for (e, members) in edge_vertices.iter().enumerate() {
        let delta = hyperedge_degrees[e];
        if delta == 0.0 {
            continue;
        }
        let coef = weights[e] / delta;
        for (a_pos, &a) in members.iter().enumerate() {
            for &b in &members[a_pos..] {
                *upper.entry((a, b)).or_insert(0.0) += coef;
            }
        }
    }

    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n_vertices];
    for (&(a, b), &s) in upper.iter() {
        let value = -s * inv_sqrt_degree[a as usize] * inv_sqrt_degree[b as usize];
        if a == b {
            let diag = if vertex_degrees[a as usize] > 0.0 {
                1.0 + value
            } else {
                0.0
            };
            if diag != 0.0 {
                rows[a as usize].push((a, diag));
            }
        } else if value != 0.0 {
            rows[a as usize].push((b, value));
            rows[b as usize].push((a, value));
        }
    }
    // Vertices with degree > 0 but no diagonal entry accumulated cannot
    // happen (every incident hyperedge contributes to (v, v)), but isolated
    // vertices legitimately have empty rows.
    for row in &mut rows {
        row.sort_unstable_by_key(|&(j, _)| j);
    }
    let laplacian = CsrMatrix::from_rows(n_vertices, rows);

    Ok(HypergraphLaplacian {
        n_vertices,
        n_hyperedges,
        vertex_edges,
        edge_vertices,
        vertex_degrees,
        hyperedge_weights: weights,
        hyperedge_degrees,
        laplacian,
        side,
    })
}

/// First-K eigenvectors of a Laplacian with their eigenvalues.
#[derive(Debug, Clone)]
pub struct SpectralFeatures {
    /// n_vertices x K; row v is the spectral feature of vertex v.
    pub features: DenseMatrix,
    /// Ascending eigenvalues, one per feature column.
    pub eigenvalues: Vec<f64>,
    pub side: Side,
}

impl SpectralFeatures {
    pub fn k(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn n_vertices(&self) -> usize {
        self.features.rows()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three_path() -> InteractionMatrix {
        // User hypergraph with vertices {v0,v1,v2} and hyperedges
        // {v0,v1}, {v1,v2}: users are vertices, items are hyperedges.
        InteractionMatrix::from_index_pairs(3, 2, vec![(0, 0), (1, 0), (1, 1), (2, 1)]).unwrap()
    }

    #[test]
    fn two_vertex_single_edge_laplacian() {
        let m = InteractionMatrix::from_index_pairs(2, 1, vec![(0, 0), (1, 0)]).unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        let l = lap.laplacian();
        assert_eq!(l.get(0, 0), 0.5);
        assert_eq!(l.get(0, 1), -0.5);
        assert_eq!(l.get(1, 0), -0.5);
        assert_eq!(l.get(1, 1), 0.5);
        assert_eq!(lap.vertex_degrees(), &[1.0, 1.0]);
        assert_eq!(lap.hyperedge_degrees(), &[2.0]);
    }

    #[test]
    fn path_laplacian_matches_hand_values() {
        let lap = build_laplacian(&three_path(), Side::User, None).unwrap();
        let l = lap.laplacian();
        let a = 0.5 / 2.0_f64.sqrt();
        let expect = [[0.5, -a, 0.0], [-a, 0.5, -a], [0.0, -a, 0.5]];
        for i in 0..3 {
            for j in 0..3 {
                assert!(
                    (l.get(i, j) - expect[i][j]).abs() < 1e-15,
                    "L[{i}][{j}] = {}, want {}",
                    l.get(i, j),
                    expect[i][j]
                );
            }
        }
        assert_eq!(lap.vertex_degrees(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn item_side_uses_transposed_incidence() {
        let m = InteractionMatrix::from_index_pairs(2, 3, vec![(0, 0), (0, 1), (1, 1), (1, 2)])
            .unwrap();
        let lap = build_laplacian(&m, Side::Item, None).unwrap();
        assert_eq!(lap.n_vertices(), 3);
        assert_eq!(lap.n_hyperedges(), 2);
        // Item 1 sits in both hyperedges; items 0 and 2 in one each.
        assert_eq!(lap.vertex_degrees(), &[1.0, 2.0, 1.0]);
    }

    #[test]
    fn isolated_vertex_row_is_zero() {
        // Item 1 is never purchased -> isolated vertex on the item side.
        let m = InteractionMatrix::new(
            2,
            3,
            vec![(0, 0), (1, 0), (1, 2)],
            vec!["a".into(), "b".into()],
            vec!["x".into(), "y".into(), "z".into()],
        )
        .unwrap();
        let lap = build_laplacian(&m, Side::Item, None).unwrap();
        let l = lap.laplacian();
        for j in 0..3 {
            assert_eq!(l.get(1, j), 0.0);
            assert_eq!(l.get(j, 1), 0.0);
        }
        assert_eq!(lap.vertex_degrees()[1], 0.0);
    }

    #[test]
    fn laplacian_is_symmetric_exactly() {
        let mut records = Vec::new();
        for u in 0u32..40 {
            for i in 0u32..25 {
                if (u * 31 + i * 17) % 7 < 2 {
                    records.push((u, i));
                }
            }
        }
        let m = InteractionMatrix::from_index_pairs(40, 25, records).unwrap();
        for side in [Side::User, Side::Item] {
            let lap = build_laplacian(&m, side, None).unwrap();
            let l = lap.laplacian();
            for i in 0..l.n() {
                for (j, v) in l.row(i) {
                    assert_eq!(v, l.get(j as usize, i), "asymmetry at ({i}, {j})");
                }
            }
        }
    }

    #[test]
    fn weight_validation() {
        let m = InteractionMatrix::from_index_pairs(2, 1, vec![(0, 0), (1, 0)]).unwrap();
        assert!(build_laplacian(&m, Side::User, Some(vec![1.0, 2.0])).is_err());
        assert!(build_laplacian(&m, Side::User, Some(vec![0.0])).is_err());
        assert!(build_laplacian(&m, Side::User, Some(vec![-1.0])).is_err());
        assert!(build_laplacian(&m, Side::User, Some(vec![2.0])).is_ok());
    }

    #[test]
    fn weighted_laplacian_scales_degrees() {
        // One hyperedge of weight 4 over two vertices: D = diag(4, 4),
        // S = 4/2 = 2 on every pair, L = I - S/(sqrt(4)sqrt(4)) = 0.5 / -0.5.
        let m = InteractionMatrix::from_index_pairs(2, 1, vec![(0, 0), (1, 0)]).unwrap();
        let lap = build_laplacian(&m, Side::User, Some(vec![4.0])).unwrap();
        assert_eq!(lap.vertex_degrees(), &[4.0, 4.0]);
        assert_eq!(lap.laplacian().get(0, 0), 0.5);
        assert_eq!(lap.laplacian().get(0, 1), -0.5);
    }
}
