//! DifNet: embedding, state initialisation, `K` diffusion + GDU layers and a
//! softmax classifier over the whole graph.

use std::sync::Arc;

use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::{diffuse, DiffusionRoute};
use crate::gdu::{CellInputs, FullCell, GduCell, GduFullParams, GduVariant, SimplifiedCell};
use crate::graph::{build_mask, normalized_adjacency, DiffusionMask, Graph, NormalizedAdjacency};
use crate::rng::{dropout_mask, stream, Stream};
use crate::tensor::{Matrix, Tape, Tensor, TensorError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("layer {layer}: {source}")]
    Layer { layer: usize, source: TensorError },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Contract(String),
}

/// Which term feeds the GDU residual input `x̃`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResidualKind {
    /// current state `H`
    Naive,
    /// embedded features `X_emb`
    Raw,
    /// `Â·H`
    GraphNaive,
    /// `Â·X_emb`
    GraphRaw,
}

impl ResidualKind {
    /// Whether the term depends on the layer state.
    pub fn is_state_dependent(self) -> bool {
        matches!(self, ResidualKind::Naive | ResidualKind::GraphNaive)
    }
}

impl std::str::FromStr for ResidualKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace('_', "-").as_str() {
            "naive" => Ok(ResidualKind::Naive),
            "raw" => Ok(ResidualKind::Raw),
            "graph-naive" => Ok(ResidualKind::GraphNaive),
            "graph-raw" => Ok(ResidualKind::GraphRaw),
            _ => Err(format!("unknown residual {s:?} (expected naive|raw|graph-naive|graph-raw)")),
        }
    }
}

impl std::fmt::Display for ResidualKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ResidualKind::Naive => "naive",
            ResidualKind::Raw => "raw",
            ResidualKind::GraphNaive => "graph-naive",
            ResidualKind::GraphRaw => "graph-raw",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub depth: usize,
    pub hidden: usize,
    pub gdu_variant: GduVariant,
    pub residual: ResidualKind,
    pub dropout_rate: f64,
    pub seed: u64,
    #[serde(skip)]
    pub route: DiffusionRoute,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            depth: 2,
            hidden: 16,
            gdu_variant: GduVariant::Full,
            residual: ResidualKind::GraphRaw,
            dropout_rate: 0.5,
            seed: 0,
            route: DiffusionRoute::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ModelError> {
        if self.depth == 0 {
            return Err(ModelError::Config("depth must be at least 1".into()));
        }
        if self.hidden == 0 {
            return Err(ModelError::Config("hidden size must be at least 1".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(ModelError::Config(format!("dropout rate {} outside [0, 1)", self.dropout_rate)));
        }
        Ok(())
    }
}

/// Graph-derived constants shared by every forward pass.
#[derive(Clone, Debug)]
pub struct GraphInputs {
    pub features: Arc<Matrix>,
    pub mask: DiffusionMask,
    pub adjacency: NormalizedAdjacency,
}

impl GraphInputs {
    pub fn new(g: &Graph) -> Self {
        GraphInputs { features: Arc::clone(g.features()), mask: build_mask(g), adjacency: normalized_adjacency(g) }
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }
}

/// An ordered list of named weight matrices.
pub trait ParamSet {
    fn matrices(&self) -> Vec<(String, &Matrix)>;
    fn matrices_mut(&mut self) -> Vec<&mut Matrix>;

    /// Overwrites every matrix from `entries`, which must match names, order
    /// and shapes exactly.
    fn load_named(&mut self, entries: &[(String, Matrix)]) -> Result<(), ModelError> {
        let names: Vec<(String, (usize, usize))> = self.matrices().into_iter().map(|(n, m)| (n, m.shape())).collect();
        if names.len() != entries.len() {
            return Err(ModelError::Contract(format!("expected {} matrices, found {}", names.len(), entries.len())));
        }
        for ((name, shape), (got, m)) in names.iter().zip(entries) {
            if name != got {
                return Err(ModelError::Contract(format!("expected matrix {name}, found {got}")));
            }
            if *shape != m.shape() {
                return Err(TensorError::Shape { op: "load parameters", left: *shape, right: m.shape() }.into());
            }
        }
        for (slot, (_, m)) in self.matrices_mut().into_iter().zip(entries) {
            slot.clone_from(m);
        }
        Ok(())
    }

    fn parameter_count(&self) -> usize {
        self.matrices().iter().map(|(_, m)| m.len()).sum()
    }
}

/// Per-layer weights of the simplified cell; `W'_u` lives on the model.
#[derive(Clone, Debug, PartialEq)]
pub struct SimplifiedLayerParams {
    pub w_u: Matrix,
    pub w_g: Matrix,
    pub w_f: Matrix,
    pub w_e: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LayerParams {
    Full(GduFullParams),
    Simplified(SimplifiedLayerParams),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DifNetParams {
    /// `d_h × d_x`
    pub w_emb: Matrix,
    /// `d_h × d_h`
    pub w_x: Matrix,
    pub layers: Vec<LayerParams>,
    /// shared `W'_u` of the simplified cell, `d_h × d_h`
    pub w_u_prime: Option<Matrix>,
    /// `d_y × d_h`
    pub w_fc: Matrix,
}

impl DifNetParams {
    /// Glorot-initialised weights drawn from the `Init` stream of `cfg.seed`.
    pub fn init(cfg: &ModelConfig, d_x: usize, d_y: usize) -> Result<Self, ModelError> {
        let mut rng = stream(cfg.seed, Stream::Init);
        Self::build(cfg, d_x, d_y, &mut |r, c| Matrix::glorot(r, c, &mut rng))
    }

    pub fn zeros(cfg: &ModelConfig, d_x: usize, d_y: usize) -> Result<Self, ModelError> {
        Self::build(cfg, d_x, d_y, &mut Matrix::zeros)
    }

    fn build(
        cfg: &ModelConfig,
        d_x: usize,
        d_y: usize,
        make: &mut dyn FnMut(usize, usize) -> Matrix,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        if d_x == 0 || d_y == 0 {
            return Err(ModelError::Config(format!("feature dim {d_x} and class count {d_y} must be positive")));
        }
        let d = cfg.hidden;
        let w_emb = make(d, d_x);
        let w_x = make(d, d);
        let layers = (0..cfg.depth)
            .map(|_| match cfg.gdu_variant {
                GduVariant::Full => LayerParams::Full(GduFullParams {
                    w_f: make(d, 3 * d),
                    w_e: make(d, 3 * d),
                    w_u: make(d, 3 * d),
                    w_g: make(d, 5 * d),
                    w_r: make(d, 5 * d),
                }),
                GduVariant::Simplified => LayerParams::Simplified(SimplifiedLayerParams {
                    w_u: make(d, 2 * d),
                    w_g: make(d, 2 * d),
                    w_f: make(d, 3 * d),
                    w_e: make(d, 3 * d),
                }),
            })
            .collect();
        let w_u_prime = (cfg.gdu_variant == GduVariant::Simplified).then(|| make(d, d));
        let w_fc = make(d_y, d);
        Ok(DifNetParams { w_emb, w_x, layers, w_u_prime, w_fc })
    }

    /// Builds cells from tape leaves given in [`ParamSet::matrices`] order.
    pub fn bind_tensors<'t>(&self, t: &[Tensor<'t>]) -> Result<BoundDifNet<'t>, ModelError> {
        let expected = self.matrices().len();
        if t.len() != expected {
            return Err(ModelError::Contract(format!("expected {expected} tensors, got {}", t.len())));
        }
        let shared = self.w_u_prime.as_ref().map(|_| t[expected - 2]);
        let mut next = 2;
        let mut cells = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            cells.push(match layer {
                LayerParams::Full(_) => {
                    let c = FullCell {
                        w_f: t[next],
                        w_e: t[next + 1],
                        w_u: t[next + 2],
                        w_g: t[next + 3],
                        w_r: t[next + 4],
                    };
                    next += 5;
                    GduCell::Full(c)
                }
                LayerParams::Simplified(_) => {
                    let w_u_prime =
                        shared.ok_or_else(|| ModelError::Contract("simplified layer without W'_u".into()))?;
                    let c = SimplifiedCell {
                        w_u: t[next],
                        w_u_prime,
                        w_g: t[next + 1],
                        w_f: t[next + 2],
                        w_e: t[next + 3],
                    };
                    next += 4;
                    GduCell::Simplified(c)
                }
            });
        }
        Ok(BoundDifNet { w_emb: t[0], w_x: t[1], cells, w_fc: t[expected - 1] })
    }

    /// Binds every matrix as a trainable leaf; returns the leaves in
    /// [`ParamSet::matrices`] order.
    pub fn bind<'t>(&self, tape: &'t Tape) -> (BoundDifNet<'t>, Vec<Tensor<'t>>) {
        let leaves: Vec<Tensor<'t>> = self.matrices().into_iter().map(|(_, m)| tape.param(m)).collect();
        (self.bind_tensors(&leaves).expect("leaf count matches"), leaves)
    }
}

impl ParamSet for DifNetParams {
    fn matrices(&self) -> Vec<(String, &Matrix)> {
        let mut out = vec![("w_emb".to_string(), &self.w_emb), ("w_x".to_string(), &self.w_x)];
        for (k, layer) in self.layers.iter().enumerate() {
            match layer {
                LayerParams::Full(p) => {
                    out.extend(p.named().into_iter().map(|(n, m)| (format!("layer{}.{n}", k + 1), m)));
                }
                LayerParams::Simplified(p) => {
                    for (n, m) in [("w_u", &p.w_u), ("w_g", &p.w_g), ("w_f", &p.w_f), ("w_e", &p.w_e)] {
                        out.push((format!("layer{}.{n}", k + 1), m));
                    }
                }
            }
        }
        if let Some(m) = &self.w_u_prime {
            out.push(("w_u_prime".to_string(), m));
        }
        out.push(("w_fc".to_string(), &self.w_fc));
        out
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = vec![&mut self.w_emb, &mut self.w_x];
        for layer in &mut self.layers {
            match layer {
                LayerParams::Full(p) => out.extend([&mut p.w_f, &mut p.w_e, &mut p.w_u, &mut p.w_g, &mut p.w_r]),
                LayerParams::Simplified(p) => out.extend([&mut p.w_u, &mut p.w_g, &mut p.w_f, &mut p.w_e]),
            }
        }
        if let Some(m) = &mut self.w_u_prime {
            out.push(m);
        }
        out.push(&mut self.w_fc);
        out
    }
}

/// DifNet weights as tape tensors.
#[derive(Clone, Debug)]
pub struct BoundDifNet<'t> {
    pub w_emb: Tensor<'t>,
    pub w_x: Tensor<'t>,
    pub cells: Vec<GduCell<'t>>,
    pub w_fc: Tensor<'t>,
}

/// Residual term on plain matrices.
pub fn compute_residual(
    kind: ResidualKind,
    x_emb: &Matrix,
    h: &Matrix,
    adj: &NormalizedAdjacency,
) -> Result<Matrix, TensorError> {
    let base = match kind {
        ResidualKind::Naive | ResidualKind::GraphNaive => h,
        ResidualKind::Raw | ResidualKind::GraphRaw => x_emb,
    };
    if x_emb.shape() != h.shape() {
        return Err(TensorError::Shape { op: "residual", left: x_emb.shape(), right: h.shape() });
    }
    match kind {
        ResidualKind::Naive | ResidualKind::Raw => Ok(base.clone()),
        ResidualKind::GraphNaive | ResidualKind::GraphRaw => {
            if adj.matrix().shape().1 != base.rows() {
                return Err(TensorError::Shape { op: "residual", left: adj.matrix().shape(), right: base.shape() });
            }
            let mut out = Matrix::zeros(base.rows(), base.cols());
            adj.matrix().mul_dense_into(base, &mut out);
            Ok(out)
        }
    }
}

fn residual_tensor<'t>(
    kind: ResidualKind,
    x_emb: Tensor<'t>,
    h: Tensor<'t>,
    adj: &NormalizedAdjacency,
) -> Result<Tensor<'t>, TensorError> {
    match kind {
        ResidualKind::Naive => Ok(h),
        ResidualKind::Raw => Ok(x_emb),
        ResidualKind::GraphNaive => h.spmm_left(adj.matrix()),
        ResidualKind::GraphRaw => x_emb.spmm_left(adj.matrix()),
    }
}

pub(crate) fn apply_dropout<'t>(
    t: Tensor<'t>,
    rate: f64,
    rng: Option<&mut (dyn RngCore + '_)>,
) -> Result<Tensor<'t>, TensorError> {
    match rng {
        Some(rng) if rate > 0.0 => {
            let (r, c) = t.shape();
            t.mul_const(Arc::new(dropout_mask(r, c, rate, rng)))
        }
        _ => Ok(t),
    }
}

/// Class probabilities `Ŷ` for every node. Dropout is active only when an
/// rng is supplied.
pub fn forward<'t>(
    net: &BoundDifNet<'t>,
    inputs: &GraphInputs,
    cfg: &ModelConfig,
    mut dropout: Option<&mut (dyn RngCore + '_)>,
) -> Result<Tensor<'t>, ModelError> {
    let tape = net.w_emb.tape();
    let x = tape.constant_shared(Arc::clone(&inputs.features));
    let x_emb = apply_dropout(x.matmul_t(&net.w_emb)?, cfg.dropout_rate, dropout.as_deref_mut())?;
    let mut h = x_emb.matmul_t(&net.w_x)?;
    let fixed = if cfg.residual.is_state_dependent() {
        None
    } else {
        Some(residual_tensor(cfg.residual, x_emb, h, &inputs.adjacency)?)
    };
    for (k, cell) in net.cells.iter().enumerate() {
        let at_layer = |source| ModelError::Layer { layer: k + 1, source };
        let x_res = match fixed {
            Some(r) => r,
            None => residual_tensor(cfg.residual, x_emb, h, &inputs.adjacency).map_err(at_layer)?,
        };
        let z = diffuse(h, &inputs.mask, cfg.route).map_err(at_layer)?;
        h = cell.forward(&CellInputs { z, h, x_res }).map_err(at_layer)?;
        h = apply_dropout(h, cfg.dropout_rate, dropout.as_deref_mut()).map_err(at_layer)?;
    }
    Ok(h.matmul_t(&net.w_fc)?.softmax_rows()?)
}

/// Evaluation-mode probabilities for stored parameters.
pub fn predict_proba(params: &DifNetParams, inputs: &GraphInputs, cfg: &ModelConfig) -> Result<Matrix, ModelError> {
    let tape = Tape::new();
    let (net, _) = params.bind(&tape);
    let y = forward(&net, inputs, cfg, None)?;
    let out = (*y.value()).clone();
    Ok(out)
}

fn check_index(idx: &[usize], n: usize) -> Result<(), ModelError> {
    if idx.is_empty() {
        return Err(ModelError::Contract("empty node index set".into()));
    }
    if let Some(&i) = idx.iter().find(|&&i| i >= n) {
        return Err(ModelError::Contract(format!("node index {i} out of range for {n} nodes")));
    }
    Ok(())
}

/// `Σ_{i∈idx} −ln max(ŷ_i[y_i], 1e-12)`.
pub fn loss(y_hat: &Matrix, labels: &[usize], idx: &[usize]) -> Result<f64, ModelError> {
    check_index(idx, y_hat.rows())?;
    let tape = Tape::new();
    let y = tape.constant(y_hat.clone());
    Ok(loss_tensor(y, &labels.into(), &idx.into())?.value().get(0, 0))
}

/// Differentiable form of [`loss`].
pub fn loss_tensor<'t>(y_hat: Tensor<'t>, labels: &Arc<[usize]>, idx: &Arc<[usize]>) -> Result<Tensor<'t>, ModelError> {
    check_index(idx, y_hat.rows())?;
    Ok(y_hat.nll(Arc::clone(labels), Arc::clone(idx))?)
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(y_hat: &Matrix) -> Vec<usize> {
    (0..y_hat.rows())
        .map(|r| {
            let row = y_hat.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best
        })
        .collect()
}

/// Fraction of `idx` whose prediction matches the label.
pub fn accuracy(pred: &[usize], labels: &[usize], idx: &[usize]) -> Result<f64, ModelError> {
    check_index(idx, pred.len().min(labels.len()))?;
    let hits = idx.iter().filter(|&&i| pred[i] == labels[i]).count();
    Ok(hits as f64 / idx.len() as f64)
}
