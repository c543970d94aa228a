//! Iterative eigensolver for the algebraically smallest eigenpairs of a
//! sparse symmetric matrix.
//!
//! Strategy: build an orthonormal Krylov basis with the Lanczos recurrence
//! under full reorthogonalization (restarting with a fresh random direction
//! on breakdown), project the operator onto the basis, and extract Ritz
//! pairs with a dense Jacobi solve of the small projected matrix. Converged
//! pairs are locked and deflated out, and further passes dig out remaining
//! eigenvalues -- including additional copies of degenerate ones, which a
//! single Krylov sequence cannot represent.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{HypergraphLaplacian, SpectralFeatures};
use crate::error::{Error, Result};
use crate::matrix::{dot, CsrMatrix, DenseMatrix};

/// Infinity-norm residual target for a pair to count as converged.
const RESIDUAL_TOL: f64 = 1e-10;
/// Breakdown threshold for the Lanczos recurrence.
const BREAKDOWN_TOL: f64 = 1e-12;

/// Returns the `k` smallest eigenpairs of the Laplacian, eigenvalues
/// ascending, eigenvector columns orthonormal and sign-fixed so the
/// largest-magnitude entry of each column is positive.
pub fn smallest_eigenpairs(
    lap: &HypergraphLaplacian,
    k: usize,
    seed: u64,
) -> Result<SpectralFeatures> {
    let (eigenvalues, vectors) = eigsh_smallest(lap.laplacian(), k, seed)?;
    let n = lap.n_vertices();
    let mut features = DenseMatrix::zeros(n, k);
    for (c, vec) in vectors.iter().enumerate() {
        for (v, &x) in vec.iter().enumerate() {
            features.set(v, c, x);
        }
    }
    Ok(SpectralFeatures {
        features,
        eigenvalues,
        side: lap.side(),
    })
}

/// As [`smallest_eigenpairs`], optionally dropping near-null eigenpairs
/// (eigenvalue < 1e-9) and refilling up to `k` from the next smallest.
pub fn spectral_features(
    lap: &HypergraphLaplacian,
    k: usize,
    seed: u64,
    drop_trivial: bool,
) -> Result<SpectralFeatures> {
    if !drop_trivial {
        return smallest_eigenpairs(lap, k, seed);
    }
    let n = lap.n_vertices();
    let mut request = (k + 4).min(n);
    loop {
        let feats = smallest_eigenpairs(lap, request, seed)?;
        let kept: Vec<usize> = (0..feats.k())
            .filter(|&c| feats.eigenvalues[c] >= 1e-9)
            .collect();
        if kept.len() >= k || request == n {
            let take = &kept[..kept.len().min(k)];
            let mut features = DenseMatrix::zeros(n, take.len());
            let mut eigenvalues = Vec::with_capacity(take.len());
            for (new_c, &c) in take.iter().enumerate() {
                eigenvalues.push(feats.eigenvalues[c]);
                for v in 0..n {
                    features.set(v, new_c, feats.features.get(v, c));
                }
            }
            return Ok(SpectralFeatures {
                features,
                eigenvalues,
                side: lap.side(),
            });
        }
        request = (request * 2).min(n);
    }
}

/// Raw solver: `k` smallest eigenpairs of a sparse symmetric matrix.
pub fn eigsh_smallest(a: &CsrMatrix, k: usize, seed: u64) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = a.n();
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!(
            "requested {k} eigenpairs of a {n}-vertex operator"
        )));
    }

    let mut locked_vals: Vec<f64> = Vec::new();
    let mut locked_vecs: Vec<Vec<f64>> = Vec::new();
    let mut basis_size = usize::max(2 * k + 40, 60).min(n);
    let mut stagnant_passes = 0usize;
    let mut best_residual = f64::INFINITY;
    let max_passes = 2 * k + 24;

    for pass in 0..max_passes {
        let remaining = n - locked_vecs.len();
        if remaining == 0 {
            break;
        }
        let p = basis_size.min(remaining);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (pass as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let (basis, images) = build_lanczos_basis(a, &locked_vecs, p, &mut rng);
        if basis.is_empty() {
            break;
        }

        // Rayleigh-Ritz: G = V^T (A V), symmetrized.
        let p = basis.len();
        let mut g = DenseMatrix::zeros(p, p);
        for i in 0..p {
            for j in i..p {
                let val = 0.5 * (dot(&basis[i], &images[j]) + dot(&basis[j], &images[i]));
                g.set(i, j, val);
                g.set(j, i, val);
            }
        }
        let (theta, y) = jacobi_eigh(&g);

        // Lock the converged ascending prefix so smaller eigenvalues are
        // never skipped over.
        let mut locked_this_pass = 0;
        for t in 0..p {
            let mut x = vec![0.0; n];
            let mut ax = vec![0.0; n];
            for j in 0..p {
                let w = y.get(j, t);
                if w != 0.0 {
                    axpy(&mut x, w, &basis[j]);
                    axpy(&mut ax, w, &images[j]);
                }
            }
            let mut residual = 0.0f64;
            for i in 0..n {
                residual = residual.max((ax[i] - theta[t] * x[i]).abs());
            }
            best_residual = best_residual.min(residual);
            if residual <= RESIDUAL_TOL {
                locked_vals.push(theta[t]);
                locked_vecs.push(x);
                locked_this_pass += 1;
                if locked_vecs.len() >= k {
                    break;
                }
            } else {
                break;
            }
        }

        if locked_vecs.len() >= k {
            break;
        }
        if locked_this_pass == 0 {
            stagnant_passes += 1;
            if basis_size >= n - locked_vecs.len() && stagnant_passes >= 2 {
                return Err(Error::EigenNotConverged {
                    achieved: best_residual,
                    target: RESIDUAL_TOL,
                });
            }
            basis_size = (basis_size * 2).min(n);
        } else {
            stagnant_passes = 0;
        }
    }

    if locked_vecs.len() < k {
        return Err(Error::EigenNotConverged {
            achieved: best_residual,
            target: RESIDUAL_TOL,
        });
    }

    // Passes lock ascending runs, but runs from different passes interleave.
    let mut order: Vec<usize> = (0..locked_vals.len()).collect();
    order.sort_by(|&a, &b| locked_vals[a].total_cmp(&locked_vals[b]));
    let mut eigenvalues = Vec::with_capacity(k);
    let mut vectors = Vec::with_capacity(k);
    for &idx in order.iter().take(k) {
        eigenvalues.push(locked_vals[idx]);
        let mut v = std::mem::take(&mut locked_vecs[idx]);
        fix_sign(&mut v);
        vectors.push(v);
    }
    Ok((eigenvalues, vectors))
}

/// Builds up to `p` orthonormal vectors spanning a Krylov space of `a`
/// orthogonal to `locked`, returning the basis and the operator images
/// `a * v` for each basis vector.
fn build_lanczos_basis(
    a: &CsrMatrix,
    locked: &[Vec<f64>],
    p: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = a.n();
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(p);
    let mut images: Vec<Vec<f64>> = Vec::with_capacity(p);

    let mut candidate = random_unit_against(n, locked, &basis, rng);
    while basis.len() < p {
        let v = match candidate.take() {
            Some(v) => v,
            None => break, // complement exhausted
        };
        let mut av = vec![0.0; n];
        a.matvec(&v, &mut av);
        basis.push(v);
        images.push(av);
        if basis.len() == p {
            break;
        }

        // Three-term recurrence seed: w = A v_last, then full
        // reorthogonalization (twice) against locked and basis vectors.
        let mut w = images.last().unwrap().clone();
        for _ in 0..2 {
            for q in locked.iter().chain(basis.iter()) {
                let proj = dot(&w, q);
                axpy(&mut w, -proj, q);
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > BREAKDOWN_TOL {
            for x in &mut w {
                *x /= norm;
            }
            candidate = Some(w);
        } else {
            // Invariant subspace found; continue in a fresh direction.
            candidate = random_unit_against(n, locked, &basis, rng);
        }
    }
    (basis, images)
}

/// Draws a random unit vector orthogonal to all given vectors, or `None`
/// if the orthogonal complement is (numerically) empty.
fn random_unit_against(
    n: usize,
    locked: &[Vec<f64>],
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    for _ in 0..8 {
        let mut w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..=1.0)).collect();
        for _ in 0..2 {
            for q in locked.iter().chain(basis.iter()) {
                let proj = dot(&w, q);
                axpy(&mut w, -proj, q);
            }
        }
        let norm = dot(&w, &w).sqrt();
        if norm > 1e-8 {
            for x in &mut w {
                *x /= norm;
            }
            return Some(w);
        }
    }
    None
}

fn axpy(y: &mut [f64], alpha: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Flips the column sign so its largest-magnitude entry is positive, the
/// lowest index winning ties.
fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    let mut best_abs = -1.0f64;
    for (i, &x) in v.iter().enumerate() {
        if x.abs() > best_abs {
            best_abs = x.abs();
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Cyclic Jacobi eigendecomposition of a small dense symmetric matrix.
/// Returns ascending eigenvalues and the eigenvector matrix (columns).
pub(crate) fn jacobi_eigh(g: &DenseMatrix) -> (Vec<f64>, DenseMatrix) {
    let n = g.rows();
    assert_eq!(n, g.cols());
    let mut a = g.clone();
    let mut v = DenseMatrix::zeros(n, n);
    for i in 0..n {
        v.set(i, i, 1.0);
    }
    if n <= 1 {
        return (vec![if n == 1 { a.get(0, 0) } else { 0.0 }; n], v);
    }

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= 1e-15 * (1.0 + frobenius(&a)) {
            break;
        }
        for p in 0..n - 1 {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                // Skip rotations that cannot change anything at double
                // precision.
                if apq.abs() <= f64::EPSILON * 1e-2 * (app.abs() + aqq.abs() + 1e-300) {
                    a.set(p, q, 0.0);
                    a.set(q, p, 0.0);
                    continue;
                }
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;

                for i in 0..n {
                    let aip = a.get(i, p);
                    let aiq = a.get(i, q);
                    a.set(i, p, c * aip - s * aiq);
                    a.set(i, q, s * aip + c * aiq);
                }
                for j in 0..n {
                    let apj = a.get(p, j);
                    let aqj = a.get(q, j);
                    a.set(p, j, c * apj - s * aqj);
                    a.set(q, j, s * apj + c * aqj);
                }
                for i in 0..n {
                    let vip = v.get(i, p);
                    let viq = v.get(i, q);
                    v.set(i, p, c * vip - s * viq);
                    v.set(i, q, s * vip + c * viq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let mut vals = Vec::with_capacity(n);
    let mut vecs = DenseMatrix::zeros(n, n);
    for (new_c, &c) in order.iter().enumerate() {
        vals.push(a.get(c, c));
        for i in 0..n {
            vecs.set(i, new_c, v.get(i, c));
        }
    }
    (vals, vecs)
}

fn frobenius(a: &DenseMatrix) -> f64 {
    a.data().iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::InteractionMatrix;
    use crate::spectral::{build_laplacian, Side};

    #[test]
    fn jacobi_solves_fixed_symmetric_matrix() {
        // [[2,1],[1,2]] has eigenpairs 1 with (1,-1)/sqrt(2), 3 with (1,1)/sqrt(2).
        let g = DenseMatrix::from_flat(2, 2, vec![2.0, 1.0, 1.0, 2.0]);
        let (vals, vecs) = jacobi_eigh(&g);
        assert!((vals[0] - 1.0).abs() < 1e-14);
        assert!((vals[1] - 3.0).abs() < 1e-14);
        let r = 1.0 / 2.0_f64.sqrt();
        assert!((vecs.get(0, 0).abs() - r).abs() < 1e-12);
        assert!((vecs.get(0, 1).abs() - r).abs() < 1e-12);
        // Columns orthonormal.
        let d = vecs.get(0, 0) * vecs.get(0, 1) + vecs.get(1, 0) * vecs.get(1, 1);
        assert!(d.abs() < 1e-12);
    }

    #[test]
    fn two_vertex_eigenpairs() {
        let m = InteractionMatrix::from_index_pairs(2, 1, vec![(0, 0), (1, 0)]).unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        let feats = smallest_eigenpairs(&lap, 2, 3).unwrap();
        assert!((feats.eigenvalues[0] - 0.0).abs() < 1e-10);
        assert!((feats.eigenvalues[1] - 1.0).abs() < 1e-10);
        let r = 1.0 / 2.0_f64.sqrt();
        assert!((feats.features.get(0, 0) - r).abs() < 1e-10);
        assert!((feats.features.get(1, 0) - r).abs() < 1e-10);
    }

    #[test]
    fn path_eigenpairs_match_hand_solution() {
        let m =
            InteractionMatrix::from_index_pairs(3, 2, vec![(0, 0), (1, 0), (1, 1), (2, 1)])
                .unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        let feats = smallest_eigenpairs(&lap, 3, 11).unwrap();
        let expect_vals = [0.0, 0.5, 1.0];
        for (got, want) in feats.eigenvalues.iter().zip(expect_vals) {
            assert!((got - want).abs() < 1e-10, "eigenvalue {got} vs {want}");
        }
        // Null vector is D^{1/2} 1 normalized: (1, sqrt(2), 1) / 2.
        let expect_vec = [0.5, 2.0_f64.sqrt() / 2.0, 0.5];
        for (v, want) in expect_vec.iter().enumerate().map(|(i, w)| (i, *w)) {
            assert!(
                (feats.features.get(v, 0) - want).abs() < 1e-10,
                "null vector entry {v}"
            );
        }
    }

    #[test]
    fn solver_is_deterministic() {
        let mut records = Vec::new();
        for u in 0u32..25 {
            for i in 0u32..18 {
                if (u * 5 + i * 11) % 4 == 0 {
                    records.push((u, i));
                }
            }
        }
        let m = InteractionMatrix::from_index_pairs(25, 18, records).unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        let a = smallest_eigenpairs(&lap, 6, 99).unwrap();
        let b = smallest_eigenpairs(&lap, 6, 99).unwrap();
        assert_eq!(a.eigenvalues, b.eigenvalues);
        assert_eq!(a.features.data(), b.features.data());
    }

    #[test]
    fn residuals_orthonormality_and_bounds() {
        let mut records = Vec::new();
        for u in 0u32..40 {
            for i in 0u32..30 {
                if (u * 13 + i * 7) % 6 < 2 {
                    records.push((u, i));
                }
            }
        }
        let m = InteractionMatrix::from_index_pairs(40, 30, records).unwrap();
        for side in [Side::User, Side::Item] {
            let lap = build_laplacian(&m, side, None).unwrap();
            let k = 8;
            let feats = smallest_eigenpairs(&lap, k, 5).unwrap();
            let n = lap.n_vertices();
            // Ascending eigenvalues within the [0, 1] spectral bound.
            for w in feats.eigenvalues.windows(2) {
                assert!(w[0] <= w[1] + 1e-12);
            }
            for &val in &feats.eigenvalues {
                assert!((-1e-10..=1.0 + 1e-10).contains(&val));
            }
            // Orthonormal columns.
            for c1 in 0..k {
                for c2 in c1..k {
                    let mut d = 0.0;
                    for v in 0..n {
                        d += feats.features.get(v, c1) * feats.features.get(v, c2);
                    }
                    let want = if c1 == c2 { 1.0 } else { 0.0 };
                    assert!((d - want).abs() < 1e-8, "gram({c1},{c2}) = {d}");
                }
            }
            // Residuals, and the power property L^n u = lambda^n u.
            let l = lap.laplacian();
            for c in 0..k {
                let x: Vec<f64> = (0..n).map(|v| feats.features.get(v, c)).collect();
                let mut lx = vec![0.0; n];
                l.matvec(&x, &mut lx);
                let lambda = feats.eigenvalues[c];
                for v in 0..n {
                    assert!((lx[v] - lambda * x[v]).abs() <= 1e-8);
                }
                let mut llx = vec![0.0; n];
                l.matvec(&lx, &mut llx);
                let mut lllx = vec![0.0; n];
                l.matvec(&llx, &mut lllx);
                for v in 0..n {
                    assert!((llx[v] - lambda * lambda * x[v]).abs() <= 1e-8);
                    assert!((lllx[v] - lambda.powi(3) * x[v]).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn degenerate_spectrum_is_recovered() {
        // Two disconnected 2-vertex components: eigenvalue 0 and eigenvalue
        // 1 each with multiplicity 2.
        let m = InteractionMatrix::from_index_pairs(4, 2, vec![(0, 0), (1, 0), (2, 1), (3, 1)])
            .unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        let feats = smallest_eigenpairs(&lap, 4, 17).unwrap();
        let want = [0.0, 0.0, 1.0, 1.0];
        for (got, want) in feats.eigenvalues.iter().zip(want) {
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn k_bounds_are_validated() {
        let m = InteractionMatrix::from_index_pairs(2, 1, vec![(0, 0), (1, 0)]).unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        assert!(smallest_eigenpairs(&lap, 0, 1).is_err());
        assert!(smallest_eigenpairs(&lap, 3, 1).is_err());
    }

    #[test]
    fn drop_trivial_removes_null_modes() {
        let m = InteractionMatrix::from_index_pairs(4, 2, vec![(0, 0), (1, 0), (2, 1), (3, 1)])
            .unwrap();
        let lap = build_laplacian(&m, Side::User, None).unwrap();
        let feats = spectral_features(&lap, 2, 17, true).unwrap();
        // Both null modes (two components) are skipped.
        assert_eq!(feats.k(), 2);
        for &v in &feats.eigenvalues {
            assert!(v >= 1e-9);
        }
    }
}
