//! Bias-free graph convolutional baseline.
//!
//! `H^{k+1} = ReLU(Â H^k W^{(k)ᵀ})` for every layer but the last, which
//! feeds a row softmax instead.

use std::sync::Arc;

use rand::RngCore;

use crate::model::{apply_dropout, GraphInputs, ModelError, ParamSet};
use crate::rng::{stream, Stream};
use crate::tensor::{Matrix, Tape, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct GcnParams {
    /// `weights[0]` is `d_h × d_x`, the last `d_y × d_h`, the rest `d_h × d_h`.
    pub weights: Vec<Matrix>,
}

impl GcnParams {
    pub fn init(depth: usize, d_x: usize, hidden: usize, d_y: usize, seed: u64) -> Result<Self, ModelError> {
        let mut rng = stream(seed, Stream::Init);
        Self::build(depth, d_x, hidden, d_y, &mut |r, c| Matrix::glorot(r, c, &mut rng))
    }

    pub fn zeros(depth: usize, d_x: usize, hidden: usize, d_y: usize) -> Result<Self, ModelError> {
        Self::build(depth, d_x, hidden, d_y, &mut Matrix::zeros)
    }

    fn build(
        depth: usize,
        d_x: usize,
        hidden: usize,
        d_y: usize,
        make: &mut dyn FnMut(usize, usize) -> Matrix,
    ) -> Result<Self, ModelError> {
        if depth < 2 {
            return Err(ModelError::Config(format!("GCN depth must be at least 2, got {depth}")));
        }
        if d_x == 0 || hidden == 0 || d_y == 0 {
            return Err(ModelError::Config("GCN dimensions must be positive".into()));
        }
        let weights = (0..depth)
            .map(|k| {
                let fan_in = if k == 0 { d_x } else { hidden };
                let fan_out = if k + 1 == depth { d_y } else { hidden };
                make(fan_out, fan_in)
            })
            .collect();
        Ok(GcnParams { weights })
    }

    pub fn depth(&self) -> usize {
        self.weights.len()
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> Vec<Tensor<'t>> {
        self.weights.iter().map(|w| tape.param(w)).collect()
    }
}

impl ParamSet for GcnParams {
    fn matrices(&self) -> Vec<(String, &Matrix)> {
        self.weights.iter().enumerate().map(|(k, w)| (format!("layer{}.w", k + 1), w)).collect()
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights.iter_mut().collect()
    }
}

/// Class probabilities; dropout between layers only when an rng is given.
pub fn gcn_forward<'t>(
    weights: &[Tensor<'t>],
    inputs: &GraphInputs,
    dropout_rate: f64,
    mut dropout: Option<&mut (dyn RngCore + '_)>,
) -> Result<Tensor<'t>, ModelError> {
    let Some(first) = weights.first() else {
        return Err(ModelError::Config("GCN needs at least one layer".into()));
    };
    let tape = first.tape();
    let mut h = tape.constant_shared(Arc::clone(&inputs.features));
    let last = weights.len() - 1;
    for (k, w) in weights.iter().enumerate() {
        let at_layer = |source| ModelError::Layer { layer: k + 1, source };
        let pre = h.matmul_t(w).and_then(|t| t.spmm_left(inputs.adjacency.matrix())).map_err(at_layer)?;
        if k == last {
            return pre.softmax_rows().map_err(at_layer);
        }
        h = pre.relu().map_err(at_layer)?;
        h = apply_dropout(h, dropout_rate, dropout.as_deref_mut()).map_err(at_layer)?;
    }
    unreachable!("loop returns at the last layer")
}

pub fn gcn_predict_proba(params: &GcnParams, inputs: &GraphInputs) -> Result<Matrix, ModelError> {
    let tape = Tape::new();
    let w = params.bind(&tape);
    let y = gcn_forward(&w, inputs, 0.0, None)?;
    let out = (*y.value()).clone();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    #[test]
    fn zero_weights_are_uniform() {
        let g = Graph::from_parts(Matrix::filled(4, 3, 0.5), vec![0, 1, 2, 0], &[(0, 1), (2, 3)]).unwrap();
        let p = GcnParams::zeros(2, 3, 5, 3).unwrap();
        let y = gcn_predict_proba(&p, &GraphInputs::new(&g)).unwrap();
        assert_eq!(y, Matrix::filled(4, 3, 1.0 / 3.0));
    }

    #[test]
    fn single_node_is_a_bias_free_mlp() {
        let x = Matrix::from_rows(&[[1.0, -2.0]]);
        let g = Graph::from_parts(x.clone(), vec![0], &[]).unwrap();
        let p = GcnParams::init(3, 2, 4, 2, 11).unwrap();
        let y = gcn_predict_proba(&p, &GraphInputs::new(&g)).unwrap();
        let mut h = x;
        for (k, w) in p.weights.iter().enumerate() {
            h = h.matmul(&w.transpose()).unwrap();
            if k + 1 < p.depth() {
                h.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
        let m = h.row(0)[0].max(h.row(0)[1]);
        let z: f64 = h.row(0).iter().map(|v| (v - m).exp()).sum();
        for c in 0..2 {
            assert!((y.get(0, c) - (h.get(0, c) - m).exp() / z).abs() < 1e-15);
        }
    }

    #[test]
    fn shapes_and_depth_check() {
        assert!(GcnParams::init(1, 3, 4, 2, 0).is_err());
        let p = GcnParams::init(4, 10, 16, 7, 0).unwrap();
        let shapes: Vec<_> = p.weights.iter().map(|w| w.shape()).collect();
        assert_eq!(shapes, vec![(16, 10), (16, 16), (16, 16), (7, 16)]);
    }
}
