//! Minimal CSR matrix used for the FT×FT spatio-temporal operators: triplet
//! construction, sparse×dense and sparse×sparse products, transpose, and
//! dense conversion for tests and small instances.

use ndarray::Array2;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseMatrix {
    /// Build from (row, col, value) triplets; duplicates sum, zeros drop.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: impl IntoIterator<Item = (usize, usize, f64)>,
    ) -> Result<SparseMatrix> {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.into_iter().collect();
        for &(r, c, _) in &sorted {
            if r >= n_rows || c >= n_cols {
                return Err(Error::Dimension(format!(
                    "triplet ({r},{c}) outside {n_rows}x{n_cols}"
                )));
            }
        }
        sorted.sort_by_key(|&(r, c, _)| (r, c));

        let mut row_ptr = vec![0usize; n_rows + 1];
        let mut col_idx = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in sorted {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..n_rows {
            row_ptr[r + 1] += row_ptr[r];
        }
        let mut m = SparseMatrix {
            n_rows,
            n_cols,
            row_ptr,
            col_idx,
            values,
        };
        m.drop_zeros();
        Ok(m)
    }

    pub fn zeros(n_rows: usize, n_cols: usize) -> SparseMatrix {
        SparseMatrix {
            n_rows,
            n_cols,
            row_ptr: vec![0; n_rows + 1],
            col_idx: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> SparseMatrix {
        SparseMatrix {
            n_rows: n,
            n_cols: n,
            row_ptr: (0..=n).collect(),
            col_idx: (0..n).collect(),
            values: vec![1.0; n],
        }
    }

    pub fn from_dense(dense: &Array2<f64>) -> SparseMatrix {
        let (r, c) = dense.dim();
        let triplets = dense
            .indexed_iter()
            .filter(|(_, &v)| v != 0.0)
            .map(|((i, j), &v)| (i, j, v));
        SparseMatrix::from_triplets(r, c, triplets).expect("indices in range by construction")
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

    pub fn iter_nonzeros(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_rows).flat_map(move |r| {
            (self.row_ptr[r]..self.row_ptr[r + 1])
                .map(move |k| (r, self.col_idx[k], self.values[k]))
        })
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_rows];
        for (r, _, v) in self.iter_nonzeros() {
            sums[r] += v;
        }
        sums
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let lo = self.row_ptr[row];
        let hi = self.row_ptr[row + 1];
        match self.col_idx[lo..hi].binary_search(&col) {
            Ok(k) => self.values[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut out = Array2::zeros((self.n_rows, self.n_cols));
        for (r, c, v) in self.iter_nonzeros() {
            out[(r, c)] = v;
        }
        out
    }

    pub fn transpose(&self) -> SparseMatrix {
        SparseMatrix::from_triplets(
            self.n_cols,
            self.n_rows,
            self.iter_nonzeros().map(|(r, c, v)| (c, r, v)),
        )
        .expect("transpose indices in range")
    }

    /// self * rhs for a dense right-hand side.
    pub fn mul_dense(&self, rhs: &Array2<f64>) -> Result<Array2<f64>> {
        if rhs.nrows() != self.n_cols {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times dense {}x{}",
                self.n_rows,
                self.n_cols,
                rhs.nrows(),
                rhs.ncols()
            )));
        }
        let mut out = Array2::zeros((self.n_rows, rhs.ncols()));
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let c = self.col_idx[k];
                let v = self.values[k];
                for u in 0..rhs.ncols() {
                    out[(r, u)] += v * rhs[(c, u)];
                }
            }
        }
        Ok(out)
    }

    /// self * rhs for a sparse right-hand side.
    pub fn mul_sparse(&self, rhs: &SparseMatrix) -> Result<SparseMatrix> {
        if rhs.n_rows != self.n_cols {
            return Err(Error::Dimension(format!(
                "sparse {}x{} times sparse {}x{}",
                self.n_rows, self.n_cols, rhs.n_rows, rhs.n_cols
            )));
        }
        let mut triplets = Vec::new();
        let mut acc = vec![0.0f64; rhs.n_cols];
        let mut touched = Vec::new();
        for r in 0..self.n_rows {
            for k in self.row_ptr[r]..self.row_ptr[r + 1] {
                let mid = self.col_idx[k];
                let v = self.values[k];
                for k2 in rhs.row_ptr[mid]..rhs.row_ptr[mid + 1] {
                    let c = rhs.col_idx[k2];
                    if acc[c] == 0.0 {
                        touched.push(c);
                    }
                    acc[c] += v * rhs.values[k2];
                }
            }
            touched.sort_unstable();
            for &c in &touched {
                if acc[c] != 0.0 {
                    triplets.push((r, c, acc[c]));
                }
                acc[c] = 0.0;
            }
            touched.clear();
        }
        SparseMatrix::from_triplets(self.n_rows, rhs.n_cols, triplets)
    }

    /// D_l * self * D_r for diagonal matrices given as vectors.
    pub fn scale_rows_cols(&self, left: &[f64], right: &[f64]) -> Result<SparseMatrix> {
        if left.len() != self.n_rows || right.len() != self.n_cols {
            return Err(Error::Dimension(
                "diagonal scaling lengths must match matrix dims".into(),
            ));
        }
        let mut out = self.clone();
        for r in 0..out.n_rows {
            for k in out.row_ptr[r]..out.row_ptr[r + 1] {
                out.values[k] *= left[r] * right[out.col_idx[k]];
            }
        }
        Ok(out)
    }

    /// self + other.
    pub fn add(&self, other: &SparseMatrix) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::Dimension("matrix sums need equal dims".into()));
        }
        let triplets = self.iter_nonzeros().chain(other.iter_nonzeros());
        SparseMatrix::from_triplets(self.n_rows, self.n_cols, triplets)
    }

    fn drop_zeros(&mut self) {
        if !self.values.contains(&0.0) {
            return;
        }
        let rebuilt: Vec<(usize, usize, f64)> = self
            .iter_nonzeros()
            .filter(|&(_, _, v)| v != 0.0)
            .collect();
        *self = SparseMatrix::from_triplets(self.n_rows, self.n_cols, rebuilt)
            .expect("rebuild preserves bounds");
    }
}

/// Kronecker product of two sparse matrices.
pub fn kron(a: &SparseMatrix, b: &SparseMatrix) -> SparseMatrix {
    let mut triplets = Vec::with_capacity(a.nnz() * b.nnz());
    for (ar, ac, av) in a.iter_nonzeros() {
        for (br, bc, bv) in b.iter_nonzeros() {
            triplets.push((ar * b.n_rows + br, ac * b.n_cols + bc, av * bv));
        }
    }
    SparseMatrix::from_triplets(a.n_rows * b.n_rows, a.n_cols * b.n_cols, triplets)
        .expect("kron indices in range")
}
