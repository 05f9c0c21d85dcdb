//! Compressed-row sparsity patterns and constant sparse matrices.

use super::Matrix;

/// Set of `(row, col)` positions stored row by row with sorted columns.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SparsityPattern {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
}

impl SparsityPattern {
    /// Builds a pattern from per-row column lists. Columns are sorted and
    /// deduplicated. Panics if a column is out of range.
    pub fn from_rows(cols: usize, mut per_row: Vec<Vec<usize>>) -> Self {
        let rows = per_row.len();
        let mut row_ptr = Vec::with_capacity(rows + 1);
        let mut col_idx = Vec::new();
        row_ptr.push(0);
        for row in per_row.iter_mut() {
            row.sort_unstable();
            row.dedup();
            if let Some(&last) = row.last() {
                assert!(last < cols, "column {last} out of range for {cols} columns");
            }
            col_idx.extend_from_slice(row);
            row_ptr.push(col_idx.len());
        }
        SparsityPattern { rows, cols, row_ptr, col_idx }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Number of stored positions.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[usize] {
        &self.col_idx[self.row_ptr[r]..self.row_ptr[r + 1]]
    }

    #[inline]
    pub fn row_range(&self, r: usize) -> std::ops::Range<usize> {
        self.row_ptr[r]..self.row_ptr[r + 1]
    }

    pub fn contains(&self, r: usize, c: usize) -> bool {
        r < self.rows && self.row(r).binary_search(&c).is_ok()
    }

    /// Dense 0/1 rendering.
    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for &c in self.row(r) {
                m.set(r, c, 1.0);
            }
        }
        m
    }
}

/// Constant sparse matrix in CSR layout.
#[derive(Clone, Debug, PartialEq)]
pub struct CsrMatrix {
    pattern: SparsityPattern,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// `values` follows the pattern's storage order.
    pub fn new(pattern: SparsityPattern, values: Vec<f64>) -> Self {
        assert_eq!(pattern.nnz(), values.len(), "one value per stored position");
        CsrMatrix { pattern, values }
    }

    pub fn pattern(&self) -> &SparsityPattern {
        &self.pattern
    }

    pub fn shape(&self) -> (usize, usize) {
        self.pattern.shape()
    }

    /// `(col, value)` pairs of one row.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.pattern.row_range(r);
        self.pattern.col_idx[range.clone()].iter().copied().zip(self.values[range].iter().copied())
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        let range = self.pattern.row_range(r);
        match self.pattern.col_idx[range.clone()].binary_search(&c) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn to_dense(&self) -> Matrix {
        let mut m = Matrix::zeros(self.pattern.rows, self.pattern.cols);
        for r in 0..self.pattern.rows {
            for (c, v) in self.row_entries(r) {
                m.set(r, c, v);
            }
        }
        m
    }

    /// `out += self · b`
    pub fn mul_dense_into(&self, b: &Matrix, out: &mut Matrix) {
        let n = b.cols();
        for r in 0..self.pattern.rows {
            let out_row = &mut out.data_mut()[r * n..(r + 1) * n];
            for (c, v) in self.row_entries(r) {
                for (o, &x) in out_row.iter_mut().zip(b.row(c)) {
                    *o += v * x;
                }
            }
        }
    }

    /// `out += selfᵀ · g`
    pub fn mul_dense_transposed_into(&self, g: &Matrix, out: &mut Matrix) {
        let n = g.cols();
        for r in 0..self.pattern.rows {
            let g_row = g.row(r);
            for (c, v) in self.row_entries(r) {
                let out_row = &mut out.data_mut()[c * n..(c + 1) * n];
                for (o, &x) in out_row.iter_mut().zip(g_row) {
                    *o += v * x;
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pattern_sorts_and_dedups() {
        let p = SparsityPattern::from_rows(3, vec![vec![2, 0, 2], vec![], vec![1]]);
        assert_eq!(p.row(0), &[0, 2]);
        assert!(p.row(1).is_empty());
        assert_eq!(p.nnz(), 3);
        assert!(p.contains(2, 1));
        assert!(!p.contains(1, 1));
    }

    #[test]
    fn csr_products_match_dense() {
        let p = SparsityPattern::from_rows(3, vec![vec![0, 2], vec![1], vec![0, 1, 2]]);
        let a = CsrMatrix::new(p, vec![1.0, 2.0, -1.0, 0.5, 0.25, 3.0]);
        let b = Matrix::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]);
        let mut out = Matrix::zeros(3, 2);
        a.mul_dense_into(&b, &mut out);
        assert!(out.max_abs_diff(&a.to_dense().matmul(&b).unwrap()) < 1e-15);
        let mut out_t = Matrix::zeros(3, 2);
        a.mul_dense_transposed_into(&b, &mut out_t);
        assert!(out_t.max_abs_diff(&a.to_dense().transpose().matmul(&b).unwrap()) < 1e-15);
    }
}
