//! Shared oracles for the integration suites. Everything here recomputes
//! quantities through routes independent of the library implementation:
//! nalgebra's dense eigensolver, explicit neighborhood double sums, and
//! contingency-table statistics.

use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use spectrec_core::dataset::InteractionMatrix;
use spectrec_core::spectral::HypergraphLaplacian;

/// Random sparse interaction matrix where every user and item index is
/// touched at least once (so builders see dense index spaces).
pub fn random_interactions(
    n_users: usize,
    n_items: usize,
    density: f64,
    rng: &mut ChaCha8Rng,
) -> InteractionMatrix {
    let mut records = Vec::new();
    for u in 0..n_users as u32 {
        for i in 0..n_items as u32 {
            if rng.gen_range(0.0..1.0) < density {
                records.push((u, i));
            }
        }
    }
    for u in 0..n_users as u32 {
        records.push((u, rng.gen_range(0..n_items as u32)));
    }
    for i in 0..n_items as u32 {
        records.push((rng.gen_range(0..n_users as u32), i));
    }
    InteractionMatrix::from_index_pairs(n_users, n_items, records).unwrap()
}

/// Dense eigendecomposition of the Laplacian, ascending eigenvalues.
/// Third-party route (nalgebra), fully independent of the crate's solver.
pub fn dense_eig(lap: &HypergraphLaplacian) -> (Vec<f64>, DMatrix<f64>) {
    let n = lap.n_vertices();
    let mut dense = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        for (j, v) in lap.laplacian().row(i) {
            dense[(i, j as usize)] = v;
        }
    }
    let eig = dense.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&c| eig.eigenvalues[c]).collect();
    let mut vecs = DMatrix::<f64>::zeros(n, n);
    for (new_c, &c) in order.iter().enumerate() {
        vecs.set_column(new_c, &eig.eigenvectors.column(c));
    }
    (vals, vecs)
}

/// Sine of the largest principal angle between the column spaces of two
/// orthonormal n x k matrices: sigma_max(Y - X (X^T Y)).
pub fn max_principal_angle_sin(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    let xty = x.transpose() * y;
    let residual = y - x * xty;
    residual.svd(false, false).singular_values[0]
}

/// Explicit neighborhood evaluation of the Laplacian as a difference
/// operator: for each positive-degree vertex i,
///
///   (L s)_i = (1 / sqrt(D_i)) * sum_{j ~ i} sum_k H_ik (W_k / Delta_k)
///             H_jk (s_i / sqrt(D_i) - s_j / sqrt(D_j)).
///
/// Zero-degree vertices map to zero.
pub fn difference_operator_apply(lap: &HypergraphLaplacian, signal: &[f64]) -> Vec<f64> {
    let n = lap.n_vertices();
    let degrees = lap.vertex_degrees();
    let weights = lap.hyperedge_weights();
    let edge_degrees = lap.hyperedge_degrees();
    let mut out = vec![0.0; n];
    for i in 0..n {
        if degrees[i] <= 0.0 {
            continue;
        }
        let si = signal[i] / degrees[i].sqrt();
        let mut acc = 0.0;
        for &k in lap.vertex_edges(i) {
            let k = k as usize;
            if edge_degrees[k] <= 0.0 {
                continue;
            }
            let coef = weights[k] / edge_degrees[k];
            for &j in lap.edge_vertices(k) {
                let j = j as usize;
                // The j == i term cancels to zero and neighbors always have
                // positive degree (they share hyperedge k).
                acc += coef * (si - signal[j] / degrees[j].sqrt());
            }
        }
        out[i] = acc / degrees[i].sqrt();
    }
    out
}

/// Adjusted Rand index between two labelings.
pub fn adjusted_rand_index(a: &[u32], b: &[u32]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len();
    let ka = a.iter().map(|&x| x as usize + 1).max().unwrap_or(0);
    let kb = b.iter().map(|&x| x as usize + 1).max().unwrap_or(0);
    let mut table = vec![vec![0usize; kb]; ka];
    for (&x, &y) in a.iter().zip(b) {
        table[x as usize][y as usize] += 1;
    }
    let choose2 = |x: usize| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table
        .iter()
        .flat_map(|row| row.iter().map(|&c| choose2(c)))
        .sum();
    let sum_a: f64 = table.iter().map(|row| choose2(row.iter().sum())).sum();
    let sum_b: f64 = (0..kb)
        .map(|j| choose2(table.iter().map(|row| row[j]).sum()))
        .sum();
    let total = choose2(n);
    let expected = sum_a * sum_b / total;
    let max_index = 0.5 * (sum_a + sum_b);
    if (max_index - expected).abs() < 1e-12 {
        return 1.0;
    }
    (sum_ij - expected) / (max_index - expected)
}
