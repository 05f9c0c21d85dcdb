mod common;

use std::sync::Arc;

use common::arb_graph;
use difnet::diffusion::{diffuse, DiffusionRoute};
use difnet::gcn::{gcn_predict_proba, GcnParams};
use difnet::gdu::{CellInputs, GduFullParams, GduSimplifiedParams, GduVariant};
use difnet::graph::{build_mask, normalized_adjacency, standard_split, Graph};
use difnet::model::{predict_proba, DifNetParams, GraphInputs, ModelConfig, ResidualKind};
use difnet::rng::node_permutation;
use difnet::tensor::{Matrix, SparsityPattern, Tape, TensorError};
use proptest::prelude::*;
use rand::SeedableRng;

fn pattern_from(bits: &[bool], n: usize) -> SparsityPattern {
    // keep the diagonal so no row is empty
    let rows = (0..n).map(|i| (0..n).filter(|&j| i == j || bits[i * n + j]).collect()).collect();
    SparsityPattern::from_rows(n, rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn matmul_shapes_compose(r in 1usize..6, k in 1usize..6, c in 1usize..6, k2 in 1usize..6) {
        let tape = Tape::new();
        let a = tape.constant(Matrix::zeros(r, k));
        let b = tape.constant(Matrix::zeros(k, c));
        prop_assert_eq!(a.matmul(&b).unwrap().shape(), (r, c));
        let bt = tape.constant(Matrix::zeros(c, k));
        prop_assert_eq!(a.matmul_t(&bt).unwrap().shape(), (r, c));
        let bad = tape.constant(Matrix::zeros(k2, c));
        prop_assert_eq!(a.matmul(&bad).is_err(), k2 != k);
        let wide = difnet::tensor::Tensor::concat_cols(&[a, tape.constant(Matrix::zeros(r, c))]).unwrap();
        prop_assert_eq!(wide.shape(), (r, k + c));
    }

    #[test]
    fn masked_softmax_is_row_stochastic_with_exact_zeros(
        (n, bits, scores) in (1usize..10).prop_flat_map(|n| (
            Just(n),
            prop::collection::vec(any::<bool>(), n * n),
            prop::collection::vec(-50.0..50.0f64, n * n),
        ))
    ) {
        let pattern = Arc::new(pattern_from(&bits, n));
        let s = Matrix::from_vec(n, n, scores).unwrap();
        let tape = Tape::new();
        let p = tape.constant(s.clone()).masked_softmax_rows(&pattern).unwrap().value();
        for i in 0..n {
            let support = pattern.row(i);
            let row_sum: f64 = support.iter().map(|&j| p.get(i, j)).sum();
            prop_assert!((row_sum - 1.0).abs() < 1e-12);
            // brute force over the support
            let m = support.iter().map(|&j| s.get(i, j)).fold(f64::NEG_INFINITY, f64::max);
            let total: f64 = support.iter().map(|&j| (s.get(i, j) - m).exp()).sum();
            for j in 0..n {
                if pattern.contains(i, j) {
                    prop_assert!(p.get(i, j) >= 0.0);
                    prop_assert!((p.get(i, j) - (s.get(i, j) - m).exp() / total).abs() < 1e-12);
                } else {
                    prop_assert_eq!(p.get(i, j), 0.0);
                }
            }
        }
    }

    #[test]
    fn full_gate_products_partition_unity_and_output_is_bounded(
        seed in any::<u64>(), rows in 1usize..5, d in 1usize..5, scale in 0.1..8.0f64,
    ) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut p = GduFullParams::glorot(d, &mut r);
        for m in [&mut p.w_f, &mut p.w_e, &mut p.w_u, &mut p.w_g, &mut p.w_r] {
            m.data_mut().iter_mut().for_each(|v| *v *= scale);
        }
        let tape = Tape::new();
        let cell = p.bind(&tape);
        let mk = |r: &mut rand_chacha::ChaCha8Rng| tape.constant(Matrix::uniform(rows, d, -3.0, 3.0, r));
        let inputs = CellInputs { z: mk(&mut r), h: mk(&mut r), x_res: mk(&mut r) };
        let out = cell.forward(&inputs).unwrap().value();
        let gates = cell.gate_values(&inputs).unwrap();
        let rg = gates.r.unwrap();
        for i in 0..rows {
            for c in 0..d {
                let (g, r) = (gates.g.get(i, c), rg.get(i, c));
                let total = g * r + (1.0 - g) * r + g * (1.0 - r) + (1.0 - g) * (1.0 - r);
                prop_assert!((total - 1.0).abs() < 1e-15);
                let v = out.get(i, c);
                // f64 tanh rounds to exactly ±1 past |x| ≈ 19, which large
                // weights reach; the open bound is only checkable below that.
                if scale <= 2.0 {
                    prop_assert!(v > -1.0 && v < 1.0, "output {}", v);
                } else {
                    // the four-term sum may round one ulp past ±1
                    prop_assert!(v.abs() <= 1.0 + 4.0 * f64::EPSILON, "output {}", v);
                }
            }
        }
    }

    #[test]
    fn simplified_output_is_bounded(seed in any::<u64>(), rows in 1usize..5, d in 1usize..5) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = GduSimplifiedParams::glorot(d, &mut r);
        let tape = Tape::new();
        let cell = p.bind(&tape);
        let mk = |r: &mut rand_chacha::ChaCha8Rng| tape.constant(Matrix::uniform(rows, d, -3.0, 3.0, r));
        let inputs = CellInputs { z: mk(&mut r), h: mk(&mut r), x_res: mk(&mut r) };
        let out = cell.forward(&inputs).unwrap().value();
        prop_assert!(out.data().iter().all(|v| v.abs() < 1.0));
    }

    #[test]
    fn gdu_rows_are_independent(seed in any::<u64>(), rows in 2usize..6, d in 1usize..4) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let p = GduFullParams::glorot(d, &mut r);
        let (z, h, x) = (
            Matrix::uniform(rows, d, -1.0, 1.0, &mut r),
            Matrix::uniform(rows, d, -1.0, 1.0, &mut r),
            Matrix::uniform(rows, d, -1.0, 1.0, &mut r),
        );
        let run = |z: Matrix, h: Matrix, x: Matrix| {
            let tape = Tape::new();
            let cell = p.bind(&tape);
            let out = cell.forward(&CellInputs { z: tape.constant(z), h: tape.constant(h), x_res: tape.constant(x) });
            (*out.unwrap().value()).clone()
        };
        let batch = run(z.clone(), h.clone(), x.clone());
        for i in 0..rows {
            let one = run(z.select_rows(&[i]), h.select_rows(&[i]), x.select_rows(&[i]));
            prop_assert_eq!(one.row(0), batch.row(i));
        }
    }

    #[test]
    fn diffusion_is_permutation_equivariant(g in arb_graph(12, 1), seed in any::<u64>(), d in 1usize..4) {
        let n = g.node_count();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let h = Matrix::uniform(n, d, -2.0, 2.0, &mut r);
        let perm = node_permutation(n, seed);
        let gp = g.permuted(&perm);
        for route in [DiffusionRoute::Dense, DiffusionRoute::Sparse] {
            let tape = Tape::new();
            let z = diffuse(tape.constant(h.clone()), &build_mask(&g), route).unwrap().value();
            let zp = diffuse(tape.constant(h.select_rows(&perm)), &build_mask(&gp), route).unwrap().value();
            prop_assert!(zp.max_abs_diff(&z.select_rows(&perm)) < 1e-12);
        }
    }

    #[test]
    fn difnet_forward_is_permutation_equivariant(
        g in arb_graph(10, 3), seed in 0u64..1000, simplified in any::<bool>(), residual in 0usize..4,
    ) {
        let residual = [ResidualKind::Naive, ResidualKind::Raw, ResidualKind::GraphNaive, ResidualKind::GraphRaw][residual];
        let cfg = ModelConfig {
            depth: 2,
            hidden: 4,
            gdu_variant: if simplified { GduVariant::Simplified } else { GduVariant::Full },
            residual,
            seed,
            ..ModelConfig::default()
        };
        let params = DifNetParams::init(&cfg, 3, 2).unwrap();
        let perm = node_permutation(g.node_count(), seed);
        let y = predict_proba(&params, &GraphInputs::new(&g), &cfg).unwrap();
        let yp = predict_proba(&params, &GraphInputs::new(&g.permuted(&perm)), &cfg).unwrap();
        prop_assert!(yp.max_abs_diff(&y.select_rows(&perm)) < 1e-12);
        for i in 0..y.rows() {
            prop_assert!((y.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gcn_forward_is_permutation_equivariant(g in arb_graph(10, 3), seed in 0u64..1000) {
        let params = GcnParams::init(3, 3, 4, 2, seed).unwrap();
        let perm = node_permutation(g.node_count(), seed);
        let y = gcn_predict_proba(&params, &GraphInputs::new(&g)).unwrap();
        let yp = gcn_predict_proba(&params, &GraphInputs::new(&g.permuted(&perm))).unwrap();
        prop_assert!(yp.max_abs_diff(&y.select_rows(&perm)) < 1e-12);
    }

    #[test]
    fn mask_and_adjacency_agree_off_the_diagonal(g in arb_graph(12, 1)) {
        let mask = build_mask(&g);
        let adj = normalized_adjacency(&g);
        let n = g.node_count();
        for i in 0..n {
            prop_assert!(mask.get(i, i));
            for j in 0..n {
                prop_assert_eq!(mask.get(i, j), mask.get(j, i));
                if i != j {
                    prop_assert_eq!(mask.get(i, j), adj.get(i, j) > 0.0);
                }
                prop_assert_eq!(adj.get(i, j), adj.get(j, i));
            }
        }
    }

    #[test]
    fn duplicate_and_reversed_edges_collapse(g in arb_graph(10, 1)) {
        let mut doubled: Vec<(usize, usize)> = Vec::new();
        for (i, j, _) in g.edges() {
            doubled.push((i, j));
            doubled.push((j, i));
        }
        let again = Graph::from_parts((**g.features()).clone(), g.labels().to_vec(), &doubled).unwrap();
        prop_assert_eq!(again.edge_count(), g.edge_count());
        prop_assert_eq!(build_mask(&again).to_dense(), build_mask(&g).to_dense());
    }

    #[test]
    fn splits_are_disjoint(n in 12usize..40, classes in 1usize..4, per_class in 1usize..3, seed in any::<u64>()) {
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
        let g = Graph::from_parts(Matrix::uniform(n, 2, 0.0, 1.0, &mut r), labels, &[]).unwrap();
        let test = n / 3;
        match standard_split(&g, per_class, 3, test) {
            Ok(s) => {
                let mut seen = vec![false; n];
                for &i in s.train.iter().chain(&s.val).chain(&s.test) {
                    prop_assert!(!seen[i]);
                    seen[i] = true;
                }
                prop_assert_eq!(s.train.len(), per_class * classes);
                prop_assert_eq!(s.test.len(), test);
            }
            Err(e) => prop_assert!(e.to_string().contains("split")),
        }
    }
}

#[test]
fn masked_softmax_rejects_shape_mismatch() {
    let tape = Tape::new();
    let pattern = Arc::new(SparsityPattern::from_rows(3, vec![vec![0], vec![1], vec![2]]));
    let err = tape.constant(Matrix::zeros(2, 3)).masked_softmax_rows(&pattern).unwrap_err();
    assert!(matches!(err, TensorError::Shape { .. }));
}
