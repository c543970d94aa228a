//! Minimal dense and sparse matrix containers.
//!
//! The numeric kernels in this crate only need row access, dot products, and
//! sparse symmetric matrix-vector products, so the containers are kept flat
//! and explicit instead of pulling in a linear algebra framework.

use rand::Rng;

/// Row-major dense matrix of `f64`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Builds from a flat row-major buffer. Panics if the length is wrong.
    pub fn from_flat(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat buffer length mismatch");
        Self { rows, cols, data }
    }

    /// Fills every entry i.i.d. uniform on [-scale, +scale].
    pub fn fill_uniform<R: Rng>(&mut self, rng: &mut R, scale: f64) {
        for v in &mut self.data {
            *v = rng.gen_range(-1.0..=1.0) * scale;
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.cols.max(1)).take(self.rows)
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Compressed sparse row matrix, square, used for Laplacians.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Assembles from per-row `(column, value)` lists; columns must be
    /// strictly increasing within each row.
    pub fn from_rows(n: usize, rows: Vec<Vec<(u32, f64)>>) -> Self {
        assert_eq!(rows.len(), n);
        let nnz = rows.iter().map(|r| r.len()).sum();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        indptr.push(0);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (j, v) in row {
                indices.push(j);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (u32, f64)> + '_ {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        self.indices[lo..hi]
            .iter()
            .copied()
            .zip(self.values[lo..hi].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let lo = self.indptr[i];
        let hi = self.indptr[i + 1];
        match self.indices[lo..hi].binary_search(&(j as u32)) {
            Ok(pos) => self.values[lo + pos],
            Err(_) => 0.0,
        }
    }

    /// y = A x
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n);
        debug_assert_eq!(y.len(), self.n);
        for i in 0..self.n {
            let mut acc = 0.0;
            for (j, v) in self.row(i) {
                acc += v * x[j as usize];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut out = DenseMatrix::zeros(self.n, self.n);
        for i in 0..self.n {
            for (j, v) in self.row(i) {
                out.set(i, j as usize, v);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_matvec_matches_dense() {
        let m = CsrMatrix::from_rows(
            3,
            vec![
                vec![(0, 2.0), (2, -1.0)],
                vec![(1, 1.5)],
                vec![(0, -1.0), (2, 3.0)],
            ],
        );
        let x = [1.0, 2.0, 3.0];
        let mut y = [0.0; 3];
        m.matvec(&x, &mut y);
        assert_eq!(y, [-1.0, 3.0, 8.0]);
        assert_eq!(m.get(0, 2), -1.0);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.nnz(), 5);
    }

    #[test]
    fn dense_rows_roundtrip() {
        let mut m = DenseMatrix::zeros(2, 3);
        m.row_mut(1).copy_from_slice(&[1.0, 2.0, 3.0]);
        assert_eq!(m.get(1, 2), 3.0);
        assert_eq!(m.row(0), &[0.0, 0.0, 0.0]);
        assert_eq!(dot(m.row(1), &[1.0, 1.0, 1.0]), 6.0);
    }
}
