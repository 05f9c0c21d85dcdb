use std::collections::HashSet;

use super::{Graph, GraphError};

/// Disjoint train / validation / test node index sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Validates disjointness and bounds.
    pub fn new(train: Vec<usize>, val: Vec<usize>, test: Vec<usize>, node_count: usize) -> Result<Self, GraphError> {
        let mut seen = HashSet::new();
        for &i in train.iter().chain(&val).chain(&test) {
            if i >= node_count {
                return Err(GraphError::Bounds { index: i, len: node_count });
            }
            if !seen.insert(i) {
                return Err(GraphError::Split(format!("node {i} appears in more than one set")));
            }
        }
        Ok(Split { train, val, test })
    }
}

/// Deterministic split by node order.
///
/// The last `test_size` nodes form the test set. From the remaining prefix,
/// the first `per_class_train` nodes of every class train, and the first
/// `val_size` nodes not used for training validate.
pub fn standard_split(
    g: &Graph,
    per_class_train: usize,
    val_size: usize,
    test_size: usize,
) -> Result<Split, GraphError> {
    let n = g.node_count();
    if per_class_train == 0 {
        return Err(GraphError::Split("per_class_train must be positive".into()));
    }
    if test_size > n {
        return Err(GraphError::Split(format!("test_size {test_size} exceeds {n} nodes")));
    }
    let pool = n - test_size;
    let mut taken = vec![0usize; g.class_count()];
    let mut in_train = vec![false; n];
    let mut train = Vec::new();
    for (i, &c) in g.labels()[..pool].iter().enumerate() {
        if taken[c] < per_class_train {
            taken[c] += 1;
            in_train[i] = true;
            train.push(i);
        }
    }
    if let Some(c) = taken.iter().position(|&t| t < per_class_train) {
        return Err(GraphError::Split(format!(
            "class {} has only {} nodes outside the test range, need {per_class_train}",
            g.class_names()[c],
            taken[c]
        )));
    }
    let val: Vec<usize> = (0..pool).filter(|&i| !in_train[i]).take(val_size).collect();
    if val.len() < val_size {
        return Err(GraphError::Split(format!("only {} nodes left for validation, need {val_size}", val.len())));
    }
    let test = (pool..n).collect();
    Split::new(train, val, test, n)
}
