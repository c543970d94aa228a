//! Eigensolver stress: awkward graph shapes against the dense oracle.

mod common;

use common::{dense_eig, random_interactions};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use spectrec_core::dataset::InteractionMatrix;
use spectrec_core::spectral::{build_laplacian, smallest_eigenpairs, Side};

fn check_against_dense(matrix: &InteractionMatrix, side: Side, k: usize, seed: u64, tag: &str) {
    let lap = match build_laplacian(matrix, side, None) {
        Ok(lap) => lap,
        Err(_) => return,
    };
    let n = lap.n_vertices();
    let k = k.min(n);
    let (dense_vals, _) = dense_eig(&lap);
    let feats = smallest_eigenpairs(&lap, k, seed).unwrap();
    for c in 0..k {
        assert!(
            (feats.eigenvalues[c] - dense_vals[c]).abs() <= 1e-8,
            "{tag}: eigenvalue {c}: {} vs dense {}",
            feats.eigenvalues[c],
            dense_vals[c]
        );
        // Residual directly on the operator.
        let x: Vec<f64> = (0..n).map(|v| feats.features.get(v, c)).collect();
        let mut lx = vec![0.0; n];
        lap.laplacian().matvec(&x, &mut lx);
        for v in 0..n {
            assert!(
                (lx[v] - feats.eigenvalues[c] * x[v]).abs() <= 1e-8,
                "{tag}: residual at vertex {v} of pair {c}"
            );
        }
    }
}

#[test]
fn disconnected_components_and_isolated_vertices() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for case in 0..6 {
        // Three blocks with no cross edges at all, plus padded isolated
        // vertices on both sides: lambda = 0 has multiplicity >= 3.
        let mut records = Vec::new();
        for block in 0..3u32 {
            for u in 0..12u32 {
                for i in 0..8u32 {
                    if rng.gen_range(0.0..1.0) < 0.4 {
                        records.push((block * 12 + u, block * 8 + i));
                    }
                }
                records.push((block * 12 + u, block * 8 + rng.gen_range(0..8)));
            }
        }
        let matrix = InteractionMatrix::from_index_pairs(40, 28, records).unwrap();
        check_against_dense(&matrix, Side::User, 8, 100 + case, "disconnected/user");
        check_against_dense(&matrix, Side::Item, 8, 200 + case, "disconnected/item");
    }
}

#[test]
fn duplicate_purchase_rows_force_exact_degeneracy() {
    // Pairs of users with identical purchase sets give exactly repeated
    // eigenvalues beyond the null space.
    let mut records = Vec::new();
    for pair in 0..8u32 {
        for &u in &[2 * pair, 2 * pair + 1] {
            for i in 0..4u32 {
                records.push((u, (pair + i) % 10));
            }
        }
    }
    let matrix = InteractionMatrix::from_index_pairs(16, 10, records).unwrap();
    for seed in 0..4 {
        check_against_dense(&matrix, Side::User, 10, seed, "duplicates/user");
        check_against_dense(&matrix, Side::Item, 8, seed, "duplicates/item");
    }
}

#[test]
fn weighted_hyperedges_keep_oracle_agreement() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for case in 0..5 {
        let matrix = random_interactions(60, 45, 0.06, &mut rng);
        let weights: Vec<f64> = (0..45).map(|_| rng.gen_range(0.1..5.0)).collect();
        let lap = build_laplacian(&matrix, Side::User, Some(weights)).unwrap();
        let (dense_vals, _) = dense_eig(&lap);
        let feats = smallest_eigenpairs(&lap, 10, 50 + case).unwrap();
        for c in 0..10 {
            assert!(
                (feats.eigenvalues[c] - dense_vals[c]).abs() <= 1e-8,
                "weighted case {case} eigenvalue {c}"
            );
            assert!(feats.eigenvalues[c] >= -1e-10 && feats.eigenvalues[c] <= 1.0 + 1e-10);
        }
    }
}

#[test]
fn full_spectrum_request_equals_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(44);
    let matrix = random_interactions(30, 25, 0.1, &mut rng);
    for side in [Side::User, Side::Item] {
        let lap = build_laplacian(&matrix, side, None).unwrap();
        let n = lap.n_vertices();
        let (dense_vals, _) = dense_eig(&lap);
        let feats = smallest_eigenpairs(&lap, n, 7).unwrap();
        for c in 0..n {
            assert!(
                (feats.eigenvalues[c] - dense_vals[c]).abs() <= 1e-8,
                "full-spectrum {} eigenvalue {c}: {} vs {}",
                side.as_str(),
                feats.eigenvalues[c],
                dense_vals[c]
            );
        }
    }
}

#[test]
fn tiny_operators() {
    // 1x1 and 2x2 corners.
    let one = InteractionMatrix::from_index_pairs(1, 1, vec![(0, 0)]).unwrap();
    let lap = build_laplacian(&one, Side::User, None).unwrap();
    let feats = smallest_eigenpairs(&lap, 1, 0).unwrap();
    // A single vertex in a singleton hyperedge: L = 1 - 1 = 0.
    assert!(feats.eigenvalues[0].abs() <= 1e-12);

    let two = InteractionMatrix::from_index_pairs(2, 2, vec![(0, 0), (1, 1), (0, 1)]).unwrap();
    check_against_dense(&two, Side::User, 2, 3, "tiny");
}
