//! Small dense/sparse helpers shared by the graph and dynamics modules.

use nalgebra::{DMatrix, SymmetricEigen};

/// Symmetric operator stored as a diagonal plus per-row off-diagonal entries.
///
/// Laplacians and mixing matrices of sparse graphs are applied through this
/// type inside integration loops, where a dense N×N product would dominate.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    diag: Vec<f64>,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseSym {
    pub fn new(diag: Vec<f64>, rows: Vec<Vec<(usize, f64)>>) -> Self {
        assert_eq!(diag.len(), rows.len());
        Self { diag, rows }
    }

    /// Graph Laplacian `D - A` of an unweighted edge list.
    pub fn laplacian(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut diag = vec![0.0; n];
        let mut rows = vec![Vec::new(); n];
        for &(i, j) in edges {
            diag[i] += 1.0;
            diag[j] += 1.0;
            rows[i].push((j, -1.0));
            rows[j].push((i, -1.0));
        }
        Self { diag, rows }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    /// `out = self * x`, column by column.
    pub fn apply_into(&self, x: &DMatrix<f64>, out: &mut DMatrix<f64>) {
        let n = self.dim();
        debug_assert_eq!(x.nrows(), n);
        debug_assert_eq!(out.shape(), x.shape());
        for c in 0..x.ncols() {
            let xc = x.column(c);
            let mut oc = out.column_mut(c);
            for i in 0..n {
                let mut acc = self.diag[i] * xc[i];
                for &(j, w) in &self.rows[i] {
                    acc += w * xc[j];
                }
                oc[i] = acc;
            }
        }
    }

    pub fn apply(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(x.nrows(), x.ncols());
        self.apply_into(x, &mut out);
        out
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for &(j, w) in &self.rows[i] {
                m[(i, j)] += w;
            }
        }
        m
    }
}

/// Eigenvalues of a symmetric matrix, sorted ascending.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 {
        return Vec::new();
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    ev.sort_by(|a, b| a.total_cmp(b));
    ev
}

/// Spectral norm (largest singular value) of a symmetric matrix.
pub fn sym_norm2(m: &DMatrix<f64>) -> f64 {
    sorted_eigenvalues(m)
        .into_iter()
        .fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

/// Spectral norm of an arbitrary matrix.
pub fn norm2(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().singular_values().max()
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc: f64, v| acc.max(v.abs()))
}

pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter()
        .zip(b.iter())
        .fold(0.0, |acc: f64, (x, y)| acc.max((x - y).abs()))
}

/// Entrywise (row-sum) infinity norm `max_i Σ_j |m_ij|`.
pub fn inf_norm(m: &DMatrix<f64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `y ← y + a·x` elementwise.
pub fn axpy(y: &mut DMatrix<f64>, a: f64, x: &DMatrix<f64>) {
    for (yi, xi) in y.as_mut_slice().iter_mut().zip(x.as_slice()) {
        *yi += a * xi;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_laplacian_matches_dense() {
        let lap = SparseSym::laplacian(3, &[(0, 1), (1, 2)]);
        let dense = lap.to_dense();
        let expected =
            DMatrix::from_row_slice(3, 3, &[1.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 1.0]);
        assert_eq!(dense, expected);

        let x = DMatrix::from_row_slice(3, 2, &[1.0, 0.5, -2.0, 3.0, 4.0, 1.0]);
        assert!(max_abs_diff(&lap.apply(&x), &(&dense * &x)) < 1e-15);
    }

    #[test]
    fn eigenvalues_sorted() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, -1.0, -1.0, 1.0]);
        let ev = sorted_eigenvalues(&m);
        assert!(ev[0].abs() < 1e-14);
        assert!((ev[1] - 2.0).abs() < 1e-14);
        assert!((sym_norm2(&m) - 2.0).abs() < 1e-14);
        assert!((norm2(&m) - 2.0).abs() < 1e-12);
    }
}
