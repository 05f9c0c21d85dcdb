//! Small bundled graphs for checks and smoke runs.

use crate::graph::{Graph, Split};
use crate::tensor::Matrix;

/// Six nodes on a ring with one chord, three features, two classes.
pub fn six_node() -> Graph {
    let features = Matrix::from_rows(&[
        [0.9, 0.1, 0.4],
        [0.0, 0.7, 0.3],
        [0.5, 0.5, 0.2],
        [0.1, 0.0, 0.8],
        [0.6, 0.8, 0.0],
        [0.3, 0.2, 0.7],
    ]);
    let edges = [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (5, 0), (1, 4)];
    Graph::from_parts(features, vec![0, 1, 0, 1, 0, 1], &edges).expect("valid toy graph")
}

pub fn six_node_split() -> Split {
    Split::new(vec![0, 1, 2, 3], vec![4], vec![5], 6).expect("valid toy split")
}

/// Two 5-node clusters joined by a single bridge. Each cluster carries a
/// noisy indicator feature; labels follow clusters.
pub fn two_cluster() -> Graph {
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for c in 0..2usize {
        for k in 0..5usize {
            let noise = 0.1 * ((k * 7 + c * 3) % 5) as f64;
            let mut row = [noise, 0.3 - 0.05 * k as f64, 0.0, 0.0];
            row[2 + c] = 1.0;
            rows.push(row);
            labels.push(c);
        }
    }
    let mut edges = Vec::new();
    for base in [0, 5] {
        for a in 0..5 {
            for b in a + 1..5 {
                if (a + b) % 3 != 0 {
                    edges.push((base + a, base + b));
                }
            }
        }
    }
    edges.push((4, 5));
    Graph::from_parts(Matrix::from_rows(&rows), labels, &edges).expect("valid toy graph")
}

/// Two training labels per cluster.
pub fn two_cluster_split() -> Split {
    Split::new(vec![0, 1, 5, 6], vec![2, 7], vec![3, 4, 8, 9], 10).expect("valid toy split")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_graphs_are_connected() {
        for g in [six_node(), two_cluster()] {
            let n = g.node_count();
            let mut seen = vec![false; n];
            let mut stack = vec![0];
            while let Some(i) = stack.pop() {
                if !std::mem::replace(&mut seen[i], true) {
                    stack.extend(g.neighbor_set(i).unwrap());
                }
            }
            assert!(seen.iter().all(|&s| s));
        }
        assert_eq!(two_cluster().class_count(), 2);
    }
}
