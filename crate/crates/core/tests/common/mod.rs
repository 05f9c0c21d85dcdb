#![allow(dead_code)]

use difnet::graph::Graph;
use difnet::tensor::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, -1.0, 1.0, rng)
}

/// Erdős–Rényi graph with `n` nodes, `d` features and `classes` labels.
pub fn random_graph(n: usize, d: usize, classes: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    let mut edges = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            if rng.gen::<f64>() < p {
                edges.push((i, j));
            }
        }
    }
    let labels = (0..n).map(|i| i % classes).collect();
    Graph::from_parts(Matrix::uniform(n, d, 0.0, 1.0, rng), labels, &edges).expect("valid random graph")
}

/// Graph with 1..=max_n nodes, `d` features, two classes.
pub fn arb_graph(max_n: usize, d: usize) -> impl Strategy<Value = Graph> {
    (1..=max_n).prop_flat_map(move |n| {
        let pairs = n * (n - 1) / 2;
        (prop::collection::vec(any::<bool>(), pairs), prop::collection::vec(0.0..1.0f64, n * d)).prop_map(
            move |(present, feats)| {
                let mut edges = Vec::new();
                let mut k = 0;
                for i in 0..n {
                    for j in i + 1..n {
                        if present[k] {
                            edges.push((i, j));
                        }
                        k += 1;
                    }
                }
                let features = Matrix::from_vec(n, d, feats).unwrap();
                Graph::from_parts(features, (0..n).map(|i| i % 2).collect(), &edges).unwrap()
            },
        )
    })
}

pub fn max_abs(a: &[Vec<f64>], b: &Matrix) -> f64 {
    let mut worst: f64 = 0.0;
    for (r, row) in a.iter().enumerate() {
        for (c, v) in row.iter().enumerate() {
            worst = worst.max((v - b.get(r, c)).abs());
        }
    }
    worst
}
