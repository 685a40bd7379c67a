use ndarray::{Array2, ArrayView2};

use crate::scalar::Scalar;

/// Row-compressed sparse matrix. Used as a constant left operand, e.g. the
/// per-relation mean-aggregation operator of a subgraph.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T> {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    /// Builds from `(row, col, value)` triplets already sorted by row.
    /// Duplicate coordinates are kept and act additively.
    pub fn from_sorted_triplets(rows: usize, cols: usize, triplets: &[(usize, usize, T)]) -> Self {
        let mut indptr = vec![0; rows + 1];
        for &(r, c, _) in triplets {
            assert!(r < rows && c < cols, "triplet ({r}, {c}) outside {rows}x{cols}");
            indptr[r + 1] += 1;
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        debug_assert!(triplets.windows(2).all(|w| w[0].0 <= w[1].0));
        CsrMatrix {
            rows,
            cols,
            indptr,
            indices: triplets.iter().map(|t| t.1).collect(),
            values: triplets.iter().map(|t| t.2).collect(),
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn to_dense(&self) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, self.cols));
        for r in 0..self.rows {
            for k in self.indptr[r]..self.indptr[r + 1] {
                out[[r, self.indices[k]]] = out[[r, self.indices[k]]] + self.values[k];
            }
        }
        out
    }

    /// `self · x`
    pub fn matmul(&self, x: ArrayView2<T>) -> Array2<T> {
        let mut out = Array2::zeros((self.rows, x.ncols()));
        for r in 0..self.rows {
            let mut row = out.row_mut(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                row.scaled_add(self.values[k], &x.row(self.indices[k]));
            }
        }
        out
    }

    /// `selfᵀ · g`
    pub fn t_matmul(&self, g: ArrayView2<T>) -> Array2<T> {
        let mut out = Array2::zeros((self.cols, g.ncols()));
        for r in 0..self.rows {
            let src = g.row(r);
            for k in self.indptr[r]..self.indptr[r + 1] {
                out.row_mut(self.indices[k]).scaled_add(self.values[k], &src);
            }
        }
        out
    }
}
