//! Matrix-form operators against per-node straight-line references.

mod common;

use common::{max_abs, random_graph, rng, uniform};
use difnet::diffusion::{diffuse, influence_weights, DiffusionRoute};
use difnet::gcn::{gcn_predict_proba, GcnParams};
use difnet::gdu::{CellInputs, GduFullParams, GduSimplifiedParams, GduVariant};
use difnet::graph::{build_mask, normalized_adjacency};
use difnet::model::{
    accuracy, compute_residual, loss, predict, predict_proba, DifNetParams, GraphInputs, ModelConfig, ParamSet,
    ResidualKind,
};
use difnet::reference::{self, lift, RefDifNetLayout, RefFull, RefMatrix, RefSimplified};
use difnet::tensor::{Matrix, Tape};
use rand::Rng;

#[test]
fn diffuse_matches_influence_weighted_sum_on_random_graphs() {
    let mut r = rng(100);
    for case in 0..50 {
        let n = r.gen_range(1..=20);
        let d = r.gen_range(1..=6);
        let g = random_graph(n, 2, 2, r.gen_range(0.0..0.5), &mut r);
        let h = Matrix::uniform(n, d, -2.0, 2.0, &mut r);
        let mask = build_mask(&g);
        let h_ref: RefMatrix<f64> = lift(&h);
        let expected: Vec<Vec<f64>> = (0..n).map(|i| reference::diffuse_node(&g, &h_ref, i)).collect();
        for route in [DiffusionRoute::Dense, DiffusionRoute::Sparse] {
            let tape = Tape::new();
            let z = diffuse(tape.constant(h.clone()), &mask, route).unwrap().value();
            let err = max_abs(&expected, &z);
            assert!(err < 1e-12, "case {case} {route:?}: {err:e}");
        }
        // the exposed ω rows reproduce the same sums
        for i in 0..n {
            let w = influence_weights(&h, &mask, i).unwrap();
            let z_i: Vec<f64> = (0..d).map(|c| (0..n).map(|j| w[j] * h.get(j, c)).sum()).collect();
            for (a, b) in z_i.iter().zip(&expected[i]) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }
}

fn cell_inputs(r: &mut rand_chacha::ChaCha8Rng, rows: usize, d: usize) -> (Matrix, Matrix, Matrix) {
    (uniform(rows, d, r), uniform(rows, d, r), uniform(rows, d, r))
}

#[test]
fn full_gdu_matches_straight_line_oracle() {
    let mut r = rng(101);
    for case in 0..100 {
        let d = r.gen_range(1..=6);
        let rows = r.gen_range(1..=5);
        let mut p = GduFullParams::glorot(d, &mut r);
        // larger weights exercise saturation too
        if case % 4 == 0 {
            for m in [&mut p.w_f, &mut p.w_e, &mut p.w_u, &mut p.w_g, &mut p.w_r] {
                m.data_mut().iter_mut().for_each(|v| *v *= 4.0);
            }
        }
        let (z, h, x) = cell_inputs(&mut r, rows, d);
        let tape = Tape::new();
        let cell = p.bind(&tape);
        let inputs =
            CellInputs { z: tape.constant(z.clone()), h: tape.constant(h.clone()), x_res: tape.constant(x.clone()) };
        let out = cell.forward(&inputs).unwrap().value();
        let gates = cell.gate_values(&inputs).unwrap();
        let w: Vec<RefMatrix<f64>> = [&p.w_f, &p.w_e, &p.w_u, &p.w_g, &p.w_r].iter().map(|m| lift(m)).collect();
        let oracle = RefFull { w: [&w[0], &w[1], &w[2], &w[3], &w[4]] };
        for i in 0..rows {
            let step = oracle.step(z.row(i), h.row(i), x.row(i));
            let g = oracle.gates(z.row(i), h.row(i), x.row(i));
            for c in 0..d {
                assert!((step[c] - out.get(i, c)).abs() < 1e-12, "case {case}");
                assert!((g.f[c] - gates.f.get(i, c)).abs() < 1e-12);
                assert!((g.e[c] - gates.e.get(i, c)).abs() < 1e-12);
                assert!((g.g[c] - gates.g.get(i, c)).abs() < 1e-12);
                assert!((g.r.as_ref().unwrap()[c] - gates.r.as_ref().unwrap().get(i, c)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn simplified_gdu_matches_straight_line_oracle() {
    let mut r = rng(102);
    for case in 0..100 {
        let d = r.gen_range(1..=6);
        let rows = r.gen_range(1..=5);
        let p = GduSimplifiedParams::glorot(d, &mut r);
        let (z, h, x) = cell_inputs(&mut r, rows, d);
        let tape = Tape::new();
        let cell = p.bind(&tape);
        let inputs =
            CellInputs { z: tape.constant(z.clone()), h: tape.constant(h.clone()), x_res: tape.constant(x.clone()) };
        let out = cell.forward(&inputs).unwrap().value();
        let gates = cell.gate_values(&inputs).unwrap();
        assert!(gates.r.is_none());
        let w: Vec<RefMatrix<f64>> = [&p.w_u, &p.w_u_prime, &p.w_g, &p.w_f, &p.w_e].iter().map(|m| lift(m)).collect();
        let oracle = RefSimplified { w: [&w[0], &w[1], &w[2], &w[3], &w[4]] };
        for i in 0..rows {
            let step = oracle.step(z.row(i), h.row(i), x.row(i));
            let g = oracle.gates(z.row(i), h.row(i), x.row(i));
            for c in 0..d {
                assert!((step[c] - out.get(i, c)).abs() < 1e-12, "case {case}");
                assert!((g.g[c] - gates.g.get(i, c)).abs() < 1e-12);
                assert!((g.f[c] - gates.f.get(i, c)).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn difnet_forward_matches_node_by_node_reference() {
    let mut r = rng(103);
    let residuals = [ResidualKind::Naive, ResidualKind::Raw, ResidualKind::GraphNaive, ResidualKind::GraphRaw];
    for (case, residual) in residuals.iter().cycle().take(12).enumerate() {
        let variant = if case % 2 == 0 { GduVariant::Full } else { GduVariant::Simplified };
        let n = r.gen_range(2..=10);
        let g = random_graph(n, 5, 3, 0.3, &mut r);
        let cfg = ModelConfig {
            depth: r.gen_range(1..=3),
            hidden: r.gen_range(2..=5),
            gdu_variant: variant,
            residual: *residual,
            seed: case as u64,
            ..ModelConfig::default()
        };
        let params = DifNetParams::init(&cfg, 5, 3).unwrap();
        let y = predict_proba(&params, &GraphInputs::new(&g), &cfg).unwrap();
        let lifted: Vec<RefMatrix<f64>> = params.matrices().iter().map(|(_, m)| lift(m)).collect();
        let layout = RefDifNetLayout { depth: cfg.depth, variant, residual: *residual };
        let expected = reference::difnet_forward(&g, layout, &lifted);
        let err = max_abs(&expected, &y);
        assert!(err < 1e-10, "case {case} {variant:?} {residual:?}: {err:e}");
    }
}

#[test]
fn gcn_forward_matches_layer_rule_loop() {
    let mut r = rng(104);
    for depth in 2..=4 {
        let g = random_graph(8, 6, 3, 0.35, &mut r);
        let params = GcnParams::init(depth, 6, 5, 3, depth as u64).unwrap();
        let y = gcn_predict_proba(&params, &GraphInputs::new(&g)).unwrap();
        let lifted: Vec<RefMatrix<f64>> = params.weights.iter().map(lift).collect();
        let err = max_abs(&reference::gcn_forward(&g, &lifted), &y);
        assert!(err < 1e-12, "depth {depth}: {err:e}");
    }
}

#[test]
fn normalized_adjacency_matches_entry_formula() {
    let mut r = rng(105);
    let g = random_graph(10, 1, 1, 0.3, &mut r);
    let a = normalized_adjacency(&g).to_dense();
    for i in 0..10 {
        for j in 0..10 {
            assert!((a.get(i, j) - reference::normalized_adjacency_entry(&g, i, j)).abs() < 1e-15);
            assert_eq!(a.get(i, j), a.get(j, i));
        }
    }
}

#[test]
fn graph_raw_residual_matches_loop() {
    let mut r = rng(106);
    let g = random_graph(8, 1, 1, 0.4, &mut r);
    let adj = normalized_adjacency(&g);
    let x_emb = uniform(8, 3, &mut r);
    let h = uniform(8, 3, &mut r);
    let out = compute_residual(ResidualKind::GraphRaw, &x_emb, &h, &adj).unwrap();
    for i in 0..8 {
        for c in 0..3 {
            let expected: f64 = (0..8).map(|j| adj.get(i, j) * x_emb.get(j, c)).sum();
            assert!((out.get(i, c) - expected).abs() < 1e-14);
        }
    }
    let naive = compute_residual(ResidualKind::GraphNaive, &x_emb, &h, &adj).unwrap();
    let expected: Vec<Vec<f64>> =
        (0..8).map(|i| (0..3).map(|c| (0..8).map(|j| adj.get(i, j) * h.get(j, c)).sum()).collect()).collect();
    assert!(max_abs(&expected, &naive) < 1e-14);
}

#[test]
fn loss_matches_per_node_per_class_loop() {
    let mut r = rng(107);
    let raw = Matrix::uniform(12, 4, 0.0, 1.0, &mut r);
    let rows: Vec<Vec<f64>> = (0..12)
        .map(|i| {
            let s: f64 = raw.row(i).iter().sum();
            raw.row(i).iter().map(|v| v / s).collect()
        })
        .collect();
    let y = Matrix::from_rows(&rows);
    let labels: Vec<usize> = (0..12).map(|i| (i * 7) % 4).collect();
    let idx = [0, 3, 4, 8, 11];
    let got = loss(&y, &labels, &idx).unwrap();
    let expected = reference::nll(&rows, &labels, &idx);
    assert!((got - expected).abs() < 1e-10);
}

#[test]
fn uniform_predictions_accuracy_is_the_class_zero_fraction() {
    // 7 nodes, uniform rows: the tie rule predicts class 0 everywhere
    let y = Matrix::filled(7, 7, 1.0 / 7.0);
    let labels = [0, 3, 0, 6, 2, 0, 1];
    let pred = predict(&y);
    assert!(pred.iter().all(|&p| p == 0));
    let acc = accuracy(&pred, &labels, &[0, 1, 2, 3, 4, 5, 6]).unwrap();
    assert!((acc - 3.0 / 7.0).abs() < 1e-15);
    assert_eq!(accuracy(&pred, &labels, &[1, 3]).unwrap(), 0.0);
}
