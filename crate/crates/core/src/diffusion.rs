//! Attention-based neighbourhood diffusion.
//!
//! Queries, keys and values are all the hidden-state matrix itself, so the
//! operator has no parameters:
//!
//! ```text
//! Z = softmax_M(H Hᵀ / √d_h) · H
//! ```
//!
//! where `softmax_M` normalises each row over the mask support only;
//! positions outside the mask get exactly zero weight.

use crate::graph::{DiffusionMask, GraphError};
use crate::tensor::{Matrix, Tensor, TensorError};

/// Graphs with more nodes than this use the edge-list route by default.
pub const DEFAULT_DENSE_MAX_NODES: usize = 512;

/// How [`diffuse`] evaluates the attention scores.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DiffusionRoute {
    /// Full `|V|×|V|` score matrix, built from primitive tape operations.
    Dense,
    /// Scores only on mask positions, as one fused tape operation.
    Sparse,
    /// Dense up to `dense_max_nodes` nodes, sparse above.
    Auto { dense_max_nodes: usize },
}

impl Default for DiffusionRoute {
    fn default() -> Self {
        DiffusionRoute::Auto { dense_max_nodes: DEFAULT_DENSE_MAX_NODES }
    }
}

fn check(h: &Tensor<'_>, mask: &DiffusionMask) -> Result<f64, TensorError> {
    let (n, d) = h.shape();
    if mask.node_count() != n || d == 0 {
        return Err(TensorError::Shape { op: "diffuse", left: (n, d), right: mask.pattern().shape() });
    }
    Ok(1.0 / (d as f64).sqrt())
}

/// Aggregated neighbour representations `Z` for hidden states `H`.
pub fn diffuse<'t>(h: Tensor<'t>, mask: &DiffusionMask, route: DiffusionRoute) -> Result<Tensor<'t>, TensorError> {
    let dense = match route {
        DiffusionRoute::Dense => true,
        DiffusionRoute::Sparse => false,
        DiffusionRoute::Auto { dense_max_nodes } => mask.node_count() <= dense_max_nodes,
    };
    if dense {
        diffuse_dense(h, mask)
    } else {
        diffuse_sparse(h, mask)
    }
}

pub fn diffuse_dense<'t>(h: Tensor<'t>, mask: &DiffusionMask) -> Result<Tensor<'t>, TensorError> {
    let scale = check(&h, mask)?;
    let scores = h.matmul_t(&h)?.scale(scale)?;
    let weights = scores.masked_softmax_rows(mask.pattern())?;
    weights.matmul(&h)
}

pub fn diffuse_sparse<'t>(h: Tensor<'t>, mask: &DiffusionMask) -> Result<Tensor<'t>, TensorError> {
    let scale = check(&h, mask)?;
    h.sparse_self_attention(mask.pattern(), scale)
}

/// Attention weights node `i` assigns to every node, as a length-`|V|`
/// vector: non-negative, summing to one, zero outside the closed
/// neighbourhood of `i`.
pub fn influence_weights(h: &Matrix, mask: &DiffusionMask, i: usize) -> Result<Vec<f64>, GraphError> {
    let n = h.rows();
    if mask.node_count() != n {
        return Err(GraphError::Invalid(format!("{n} hidden rows for a {}-node mask", mask.node_count())));
    }
    if i >= n {
        return Err(GraphError::Bounds { index: i, len: n });
    }
    let scale = 1.0 / (h.cols() as f64).sqrt();
    let hi = h.row(i);
    let support = mask.support(i);
    let scores: Vec<f64> =
        support.iter().map(|&j| scale * hi.iter().zip(h.row(j)).map(|(a, b)| a * b).sum::<f64>()).collect();
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    let mut weights = vec![0.0; n];
    for (&j, e) in support.iter().zip(exp) {
        weights[j] = e / total;
    }
    Ok(weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_mask, Graph};
    use crate::tensor::Tape;

    fn mask(n: usize, edges: &[(usize, usize)]) -> DiffusionMask {
        build_mask(&Graph::from_parts(Matrix::zeros(n, 1), vec![0; n], edges).unwrap())
    }

    #[test]
    fn single_node_attends_to_itself() {
        let m = mask(1, &[]);
        for route in [DiffusionRoute::Dense, DiffusionRoute::Sparse] {
            let tape = Tape::new();
            let h = tape.constant(Matrix::from_rows(&[[1.0, 2.0]]));
            let z = diffuse(h, &m, route).unwrap().value();
            assert_eq!(z.row(0), &[1.0, 2.0]);
        }
    }

    #[test]
    fn identical_rows_are_a_fixed_point() {
        let m = mask(4, &[(0, 1), (1, 2), (2, 3), (3, 0)]);
        let rows = vec![[0.3, -1.2, 2.0]; 4];
        for route in [DiffusionRoute::Dense, DiffusionRoute::Sparse] {
            let tape = Tape::new();
            let h = tape.constant(Matrix::from_rows(&rows));
            let z = diffuse(h, &m, route).unwrap().value();
            for (r, row) in rows.iter().enumerate() {
                for (a, b) in z.row(r).iter().zip(row) {
                    assert!((a - b).abs() < 1e-15);
                }
            }
        }
    }

    #[test]
    fn influence_weights_examples() {
        // equal scores against self and neighbour
        let m = mask(3, &[(0, 1)]);
        let h = Matrix::from_rows(&[[1.0, 0.0], [1.0, 5.0], [5.0, 5.0]]);
        assert_eq!(influence_weights(&h, &m, 0).unwrap(), vec![0.5, 0.5, 0.0]);
        assert_eq!(influence_weights(&h, &m, 2).unwrap(), vec![0.0, 0.0, 1.0]);
        assert!(matches!(influence_weights(&h, &m, 3), Err(GraphError::Bounds { index: 3, len: 3 })));
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let m = mask(3, &[]);
        let tape = Tape::new();
        let h = tape.constant(Matrix::zeros(2, 2));
        assert!(matches!(diffuse(h, &m, DiffusionRoute::Dense), Err(TensorError::Shape { .. })));
        assert!(matches!(diffuse(h, &m, DiffusionRoute::Sparse), Err(TensorError::Shape { .. })));
    }

    #[test]
    fn auto_route_threshold() {
        let m = mask(3, &[(0, 1)]);
        let tape = Tape::new();
        let h = tape.constant(Matrix::from_rows(&[[1.0], [2.0], [3.0]]));
        let before = tape.len();
        diffuse(h, &m, DiffusionRoute::Auto { dense_max_nodes: 2 }).unwrap();
        assert_eq!(tape.len() - before, 1, "fused op expected");
        let before = tape.len();
        diffuse(h, &m, DiffusionRoute::Auto { dense_max_nodes: 3 }).unwrap();
        assert_eq!(tape.len() - before, 4, "matmul_t, scale, softmax, matmul expected");
    }
}
