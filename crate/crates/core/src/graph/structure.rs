use std::sync::Arc;

use super::Graph;
use crate::tensor::{CsrMatrix, Matrix, SparsityPattern};

/// Binary `|V|×|V|` support for attention: `M(i,j) = 1` iff `i` and `j` are
/// adjacent or `i = j`. Stored sparsely; symmetric with a full diagonal.
#[derive(Clone, Debug, PartialEq)]
pub struct DiffusionMask {
    pattern: Arc<SparsityPattern>,
}

impl DiffusionMask {
    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn node_count(&self) -> usize {
        self.pattern.rows()
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.pattern.contains(i, j)
    }

    /// Columns set in row `i`, ascending.
    pub fn support(&self, i: usize) -> &[usize] {
        self.pattern.row(i)
    }

    pub fn to_dense(&self) -> Matrix {
        self.pattern.to_dense()
    }
}

/// `D̃^{-1/2} (A + I) D̃^{-1/2}` with `D̃` the degree matrix of `A + I`.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalizedAdjacency {
    matrix: Arc<CsrMatrix>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<CsrMatrix> {
        &self.matrix
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }

    pub fn to_dense(&self) -> Matrix {
        self.matrix.to_dense()
    }
}

fn closed_neighborhoods(g: &Graph) -> Vec<Vec<usize>> {
    (0..g.node_count())
        .map(|i| {
            let mut row = g.neighbor_set(i).expect("index in range").to_vec();
            row.push(i);
            row
        })
        .collect()
}

pub fn build_mask(g: &Graph) -> DiffusionMask {
    DiffusionMask { pattern: Arc::new(SparsityPattern::from_rows(g.node_count(), closed_neighborhoods(g))) }
}

pub fn normalized_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.node_count();
    let pattern = SparsityPattern::from_rows(n, closed_neighborhoods(g));
    // A + I: off-diagonal ones, diagonal 1 (+1 for a self-loop edge)
    let raw = |i: usize, j: usize| if i == j { 1.0 + g.edge_weight(i, i) } else { 1.0 };
    let degree: Vec<f64> = (0..n).map(|i| pattern.row(i).iter().map(|&j| raw(i, j)).sum()).collect();
    let mut values = Vec::with_capacity(pattern.nnz());
    for i in 0..n {
        for &j in pattern.row(i) {
            values.push(raw(i, j) / (degree[i] * degree[j]).sqrt());
        }
    }
    NormalizedAdjacency { matrix: Arc::new(CsrMatrix::new(pattern, values)) }
}
