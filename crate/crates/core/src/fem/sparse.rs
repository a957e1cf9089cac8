//! Compressed-row sparse matrices with a fixed pattern built from element dof lists.

use std::collections::BTreeSet;

/// Compressed-row matrix; column indices are sorted within each row.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Zero matrix whose pattern couples every row dof of an element with every column dof.
    pub fn from_element_pattern<'a>(
        n_rows: usize,
        n_cols: usize,
        elements: impl Iterator<Item = (&'a [usize], &'a [usize])>,
    ) -> Self {
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_rows];
        for (r, c) in elements {
            for &i in r {
                rows[i].extend(c.iter().copied());
            }
        }
        Self::from_row_sets(n_rows, n_cols, rows)
    }

    fn from_row_sets(n_rows: usize, n_cols: usize, rows: Vec<BTreeSet<usize>>) -> Self {
        let mut row_ptr = Vec::with_capacity(n_rows + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::new();
        for r in rows {
            col_idx.extend(r);
            row_ptr.push(col_idx.len());
        }
        let nnz = col_idx.len();
        Self {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values: vec![0.0; nnz],
        }
    }

    /// Builds a matrix from (row, col, value) triplets, summing duplicates.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); n_rows];
        for &(i, j, _) in triplets {
            rows[i].insert(j);
        }
        let mut m = Self::from_row_sets(n_rows, n_cols, rows);
        for &(i, j, v) in triplets {
            m.add(i, j, v);
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        (&self.col_idx[r.clone()], &self.values[r])
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_ptr[i];
        self.col_idx[start..self.row_ptr[i + 1]]
            .binary_search(&j)
            .ok()
            .map(|k| start + k)
    }

    /// Adds `v` to entry (i, j), which must be in the pattern.
    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is outside the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Scatters a dense local matrix (row-major, `rows.len() × cols.len()`).
    pub fn add_local(&mut self, rows: &[usize], cols: &[usize], local: &[f64]) {
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                self.add(i, j, local[a * cols.len() + b]);
            }
        }
    }

    /// y = A x.
    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows];
        self.mul_vec_into(x, &mut y);
        y
    }

    pub fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        for (i, yi) in y.iter_mut().enumerate() {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.values[k] * x[self.col_idx[k]];
            }
            *yi = s;
        }
    }

    /// y = Aᵀ x.
    pub fn mul_transpose_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_cols];
        for (i, &xi) in x.iter().enumerate() {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                y[self.col_idx[k]] += self.values[k] * xi;
            }
        }
        y
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    pub fn transpose(&self) -> Self {
        let mut rows: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); self.n_cols];
        for i in 0..self.n_rows {
            for &j in self.row(i).0 {
                rows[j].insert(i);
            }
        }
        let mut t = Self::from_row_sets(self.n_cols, self.n_rows, rows);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.add(j, i, v);
            }
        }
        t
    }

    /// Largest |A_ij − A_ji|.
    pub fn max_asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                worst = worst.max((v - self.get(j, i)).abs());
            }
        }
        worst
    }

    /// Block-diagonal matrix with three copies of `self`.
    pub fn kron_identity3(&self) -> Self {
        let n = self.n_rows;
        let m = self.n_cols;
        let mut row_ptr = Vec::with_capacity(3 * n + 1);
        row_ptr.push(0);
        let mut col_idx = Vec::with_capacity(3 * self.nnz());
        let mut values = Vec::with_capacity(3 * self.nnz());
        for c in 0..3 {
            for i in 0..n {
                let (cols, vals) = self.row(i);
                col_idx.extend(cols.iter().map(|&j| c * m + j));
                values.extend_from_slice(vals);
                row_ptr.push(col_idx.len());
            }
        }
        Self {
            n_rows: 3 * n,
            n_cols: 3 * m,
            row_ptr,
            col_idx,
            values,
        }
    }

    /// Dense copy as a row-major nalgebra matrix.
    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let mut d = nalgebra::DMatrix::zeros(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                d[(i, j)] = v;
            }
        }
        d
    }

    /// Matrix with the listed rows removed (used to pin a pressure dof).
    pub fn without_row(&self, row: usize) -> Self {
        let mut row_ptr = vec![0];
        let mut col_idx = Vec::with_capacity(self.nnz());
        let mut values = Vec::with_capacity(self.nnz());
        for i in (0..self.n_rows).filter(|&i| i != row) {
            let (cols, vals) = self.row(i);
            col_idx.extend_from_slice(cols);
            values.extend_from_slice(vals);
            row_ptr.push(col_idx.len());
        }
        Self {
            n_rows: self.n_rows - 1,
            n_cols: self.n_cols,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> CsrMatrix {
        CsrMatrix::from_triplets(3, 3, &[(0, 0, 2.0), (0, 2, 1.0), (1, 1, 3.0), (2, 0, 1.0), (2, 2, 4.0), (2, 0, 0.5)])
    }

    #[test]
    fn triplets_sum_duplicates() {
        let m = sample();
        assert_eq!(m.get(2, 0), 1.5);
        assert_eq!(m.get(1, 0), 0.0);
        assert_eq!(m.nnz(), 5);
    }

    #[test]
    fn products_match_dense() {
        let m = sample();
        let x = [1.0, -2.0, 0.5];
        let d = m.to_dense();
        let y = m.mul_vec(&x);
        let yt = m.mul_transpose_vec(&x);
        let xd = nalgebra::DVector::from_column_slice(&x);
        let (yd, ytd) = (&d * &xd, d.transpose() * &xd);
        for i in 0..3 {
            assert!((y[i] - yd[i]).abs() < 1e-15);
            assert!((yt[i] - ytd[i]).abs() < 1e-15);
        }
        assert_eq!(m.transpose().to_dense(), d.transpose());
        assert_eq!(m.max_asymmetry(), 0.5);
    }

    #[test]
    fn kron_blocks() {
        let m = sample();
        let k = m.kron_identity3();
        assert_eq!(k.n_rows(), 9);
        for c in 0..3 {
            for i in 0..3 {
                for j in 0..3 {
                    assert_eq!(k.get(3 * c + i, 3 * c + j), m.get(i, j));
                }
            }
        }
        assert_eq!(k.get(0, 3), 0.0);
    }

    #[test]
    fn element_pattern() {
        let e1 = [0usize, 1];
        let e2 = [1usize, 2];
        let m = CsrMatrix::from_element_pattern(3, 3, [(&e1[..], &e1[..]), (&e2[..], &e2[..])].into_iter());
        assert_eq!(m.nnz(), 7);
        assert_eq!(m.row(1).0, &[0, 1, 2]);
    }

    #[test]
    fn remove_row() {
        let m = sample().without_row(1);
        assert_eq!(m.n_rows(), 2);
        assert_eq!(m.get(1, 2), 4.0);
    }
}
