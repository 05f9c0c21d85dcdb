//! Citation-network graphs and the structures derived from them: the
//! diffusion mask, the renormalised adjacency and the train/val/test split.

mod loader;
mod split;
mod structure;

pub use loader::load_citation_dataset;
pub use split::{standard_split, Split};
pub use structure::{build_mask, normalized_adjacency, DiffusionMask, NormalizedAdjacency};

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::tensor::Matrix;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: no records")]
    EmptyDataset { path: PathBuf },

    #[error("node index {index} out of bounds for {len} nodes")]
    Bounds { index: usize, len: usize },

    #[error("invalid graph: {0}")]
    Invalid(String),

    #[error("split: {0}")]
    Split(String),
}

/// Undirected, unweighted attributed graph. Every stored edge has weight 1;
/// neighbour lists are symmetric and sorted.
#[derive(Clone, Debug)]
pub struct Graph {
    node_ids: Vec<String>,
    features: Arc<Matrix>,
    labels: Vec<usize>,
    class_names: Vec<String>,
    neighbors: Vec<Vec<usize>>,
}

impl Graph {
    /// Builds a graph from raw parts. Edges are symmetrised and deduplicated;
    /// `(i, i)` entries become self-loops.
    pub fn new(
        node_ids: Vec<String>,
        features: Matrix,
        labels: Vec<usize>,
        class_names: Vec<String>,
        edges: &[(usize, usize)],
    ) -> Result<Self, GraphError> {
        let n = node_ids.len();
        if features.rows() != n || labels.len() != n {
            return Err(GraphError::Invalid(format!(
                "{n} nodes but {} feature rows and {} labels",
                features.rows(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(GraphError::Invalid(format!("label {bad} with {} classes", class_names.len())));
        }
        let mut neighbors = vec![Vec::new(); n];
        for &(a, b) in edges {
            for idx in [a, b] {
                if idx >= n {
                    return Err(GraphError::Bounds { index: idx, len: n });
                }
            }
            neighbors[a].push(b);
            if a != b {
                neighbors[b].push(a);
            }
        }
        for list in &mut neighbors {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Graph { node_ids, features: Arc::new(features), labels, class_names, neighbors })
    }

    /// Graph with generated ids `"0"`, `"1"`, ... and a single label class
    /// per distinct label value. Handy for synthetic instances.
    pub fn from_parts(features: Matrix, labels: Vec<usize>, edges: &[(usize, usize)]) -> Result<Self, GraphError> {
        let n = features.rows();
        let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
        let ids = (0..n).map(|i| i.to_string()).collect();
        let names = (0..classes).map(|c| format!("class{c}")).collect();
        Graph::new(ids, features, labels, names, edges)
    }

    pub fn node_count(&self) -> usize {
        self.node_ids.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn class_count(&self) -> usize {
        self.class_names.len()
    }

    pub fn node_ids(&self) -> &[String] {
        &self.node_ids
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &Arc<Matrix> {
        &self.features
    }

    /// Class index per node.
    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// One-hot label matrix `[nodes × classes]`.
    pub fn label_matrix(&self) -> Matrix {
        let mut y = Matrix::zeros(self.node_count(), self.class_count());
        for (i, &l) in self.labels.iter().enumerate() {
            y.set(i, l, 1.0);
        }
        y
    }

    /// Number of undirected edges, self-loops included.
    pub fn edge_count(&self) -> usize {
        self.neighbors.iter().enumerate().map(|(i, list)| list.iter().filter(|&&j| j >= i).count()).sum()
    }

    /// Both orientations of every edge, each with weight 1.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.neighbors.iter().enumerate().flat_map(|(i, list)| list.iter().map(move |&j| (i, j, 1.0)))
    }

    pub fn edge_weight(&self, i: usize, j: usize) -> f64 {
        if self.neighbors[i].binary_search(&j).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    /// Nodes adjacent to `i`; contains `i` only for a self-loop.
    pub fn neighbor_set(&self, i: usize) -> Result<&[usize], GraphError> {
        self.neighbors.get(i).map(Vec::as_slice).ok_or(GraphError::Bounds { index: i, len: self.node_count() })
    }

    /// Same graph with nodes relabelled so that old node `perm[k]` becomes
    /// new node `k`.
    pub fn permuted(&self, perm: &[usize]) -> Graph {
        let n = self.node_count();
        assert_eq!(perm.len(), n);
        let mut inverse = vec![0; n];
        for (new, &old) in perm.iter().enumerate() {
            inverse[old] = new;
        }
        let edges: Vec<(usize, usize)> =
            self.edges().filter(|&(i, j, _)| i <= j).map(|(i, j, _)| (inverse[i], inverse[j])).collect();
        Graph::new(
            perm.iter().map(|&o| self.node_ids[o].clone()).collect(),
            self.features.select_rows(perm),
            perm.iter().map(|&o| self.labels[o]).collect(),
            self.class_names.clone(),
            &edges,
        )
        .expect("permutation of a valid graph")
    }
}
