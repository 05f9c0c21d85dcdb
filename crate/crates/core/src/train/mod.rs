//! Full-graph training, evaluation and depth sweeps.

mod adam;
mod checkpoint;
mod metrics;

pub use adam::Adam;
pub use checkpoint::{Checkpoint, CHECKPOINT_VERSION};
pub use metrics::{read_metrics, read_sweep, write_metrics, write_sweep, EpochRecord, SweepRow};

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{debug, info};
use rand::RngCore;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffusion::DiffusionRoute;
use crate::gcn::{gcn_forward, GcnParams};
use crate::gdu::GduVariant;
use crate::graph::{Graph, GraphError, Split};
use crate::model::{
    accuracy, forward, loss, loss_tensor, predict, DifNetParams, GraphInputs, ModelConfig, ModelError, ParamSet,
    ResidualKind,
};
use crate::rng::{stream, Stream};
use crate::tensor::{Matrix, Tape, Tensor, TensorError};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("training diverged at epoch {epoch}: {reason}")]
    Diverged { epoch: usize, reason: String },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("{0}")]
    Format(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(e.into())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    DifNet,
    Gcn,
}

impl std::str::FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "difnet" => Ok(ModelKind::DifNet),
            "gcn" => Ok(ModelKind::Gcn),
            other => Err(format!("unknown model {other:?} (expected difnet|gcn)")),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ModelKind::DifNet => "difnet",
            ModelKind::Gcn => "gcn",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub dataset: String,
    pub model: ModelKind,
    pub depth: usize,
    pub hidden: usize,
    pub gdu_variant: GduVariant,
    pub residual: ResidualKind,
    pub learning_rate: f64,
    pub max_epochs: usize,
    pub weight_decay: f64,
    pub dropout: f64,
    pub seed: u64,
    #[serde(skip)]
    pub route: DiffusionRoute,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            dataset: "cora".into(),
            model: ModelKind::DifNet,
            depth: 2,
            hidden: 16,
            gdu_variant: GduVariant::Full,
            residual: ResidualKind::GraphRaw,
            learning_rate: 0.01,
            max_epochs: 1000,
            weight_decay: 5e-4,
            dropout: 0.5,
            seed: 0,
            route: DiffusionRoute::default(),
        }
    }
}

impl TrainConfig {
    /// Defaults for a named dataset (pubmed uses a smaller learning rate).
    pub fn for_dataset(name: &str) -> Self {
        let learning_rate = if name == "pubmed" { 0.005 } else { 0.01 };
        TrainConfig { dataset: name.to_string(), learning_rate, ..TrainConfig::default() }
    }

    pub fn model_config(&self) -> ModelConfig {
        ModelConfig {
            depth: self.depth,
            hidden: self.hidden,
            gdu_variant: self.gdu_variant,
            residual: self.residual,
            dropout_rate: self.dropout,
            seed: self.seed,
            route: self.route,
        }
    }

    pub fn validate(&self) -> Result<(), TrainError> {
        self.model_config().validate().map_err(|e| TrainError::Config(e.to_string()))?;
        if self.model == ModelKind::Gcn && self.depth < 2 {
            return Err(TrainError::Config(format!("GCN depth must be at least 2, got {}", self.depth)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(TrainError::Config(format!("learning rate {} must be positive", self.learning_rate)));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(TrainError::Config(format!("weight decay {} must be non-negative", self.weight_decay)));
        }
        Ok(())
    }
}

/// Weights of either model.
#[derive(Clone, Debug, PartialEq)]
pub enum ModelParams {
    DifNet(DifNetParams),
    Gcn(GcnParams),
}

impl ModelParams {
    pub fn init(cfg: &TrainConfig, d_x: usize, d_y: usize) -> Result<Self, ModelError> {
        Ok(match cfg.model {
            ModelKind::DifNet => ModelParams::DifNet(DifNetParams::init(&cfg.model_config(), d_x, d_y)?),
            ModelKind::Gcn => ModelParams::Gcn(GcnParams::init(cfg.depth, d_x, cfg.hidden, d_y, cfg.seed)?),
        })
    }

    pub fn zeros(cfg: &TrainConfig, d_x: usize, d_y: usize) -> Result<Self, ModelError> {
        Ok(match cfg.model {
            ModelKind::DifNet => ModelParams::DifNet(DifNetParams::zeros(&cfg.model_config(), d_x, d_y)?),
            ModelKind::Gcn => ModelParams::Gcn(GcnParams::zeros(cfg.depth, d_x, cfg.hidden, d_y)?),
        })
    }

    /// Forward pass over leaves given in [`ParamSet::matrices`] order.
    pub fn forward<'t>(
        &self,
        leaves: &[Tensor<'t>],
        inputs: &GraphInputs,
        cfg: &TrainConfig,
        dropout: Option<&mut (dyn RngCore + '_)>,
    ) -> Result<Tensor<'t>, ModelError> {
        match self {
            ModelParams::DifNet(p) => forward(&p.bind_tensors(leaves)?, inputs, &cfg.model_config(), dropout),
            ModelParams::Gcn(_) => gcn_forward(leaves, inputs, cfg.dropout, dropout),
        }
    }

    /// Evaluation-mode class probabilities.
    pub fn predict_proba(&self, inputs: &GraphInputs, cfg: &TrainConfig) -> Result<Matrix, ModelError> {
        let tape = Tape::new();
        let leaves: Vec<Tensor<'_>> = self.matrices().into_iter().map(|(_, m)| tape.param(m)).collect();
        let y = self.forward(&leaves, inputs, cfg, None)?;
        let out = (*y.value()).clone();
        Ok(out)
    }
}

impl ParamSet for ModelParams {
    fn matrices(&self) -> Vec<(String, &Matrix)> {
        match self {
            ModelParams::DifNet(p) => p.matrices(),
            ModelParams::Gcn(p) => p.matrices(),
        }
    }

    fn matrices_mut(&mut self) -> Vec<&mut Matrix> {
        match self {
            ModelParams::DifNet(p) => p.matrices_mut(),
            ModelParams::Gcn(p) => p.matrices_mut(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainReport {
    /// One record per epoch, numbered from 1.
    pub records: Vec<EpochRecord>,
    /// 0 when the initial parameters were never beaten.
    pub best_val_epoch: usize,
    pub best_val_acc: f64,
    pub test_acc_at_best_val: f64,
    pub wall_clock_seconds: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub report: TrainReport,
    /// Parameters of the best validation epoch.
    pub checkpoint: Checkpoint,
}

struct Snapshot {
    epoch: usize,
    val_acc: f64,
    val_loss: f64,
    test_acc: f64,
}

struct Scores {
    train_acc: f64,
    val_acc: f64,
    val_loss: f64,
    test_acc: f64,
}

fn score(y: &Matrix, labels: &[usize], split: &Split) -> Result<Scores, ModelError> {
    let pred = predict(y);
    Ok(Scores {
        train_acc: accuracy(&pred, labels, &split.train)?,
        val_acc: accuracy(&pred, labels, &split.val)?,
        val_loss: loss(y, labels, &split.val)?,
        test_acc: accuracy(&pred, labels, &split.test)?,
    })
}

fn diverged(epoch: usize) -> impl Fn(ModelError) -> TrainError {
    move |e| match e {
        ModelError::Tensor(TensorError::NonFinite { .. })
        | ModelError::Layer { source: TensorError::NonFinite { .. }, .. } => {
            TrainError::Diverged { epoch, reason: e.to_string() }
        }
        other => TrainError::Model(other),
    }
}

/// Trains with Adam on the mean training loss plus L2 decay and keeps the
/// parameters of the best validation epoch (ties go to the lower validation
/// loss). Recorded `train_loss` is the summed loss of the training pass.
pub fn train(cfg: &TrainConfig, g: &Graph, split: &Split) -> Result<TrainOutcome, TrainError> {
    cfg.validate()?;
    for (name, set) in [("train", &split.train), ("val", &split.val), ("test", &split.test)] {
        if set.is_empty() {
            return Err(TrainError::Config(format!("{name} set is empty")));
        }
    }
    let inputs = GraphInputs::new(g);
    let (d_x, d_y) = (g.feature_dim(), g.class_count());
    let mut params = ModelParams::init(cfg, d_x, d_y)?;
    let labels: Arc<[usize]> = g.labels().into();
    let train_idx: Arc<[usize]> = split.train.as_slice().into();
    let mut adam = Adam::new(cfg.learning_rate, cfg.weight_decay);
    let mut dropout_rng = stream(cfg.seed, Stream::Dropout);

    let start = Instant::now();
    let initial = score(&params.predict_proba(&inputs, cfg).map_err(diverged(0))?, &labels, split)?;
    let mut best =
        Snapshot { epoch: 0, val_acc: initial.val_acc, val_loss: initial.val_loss, test_acc: initial.test_acc };
    let mut best_params = params.clone();
    let mut records = Vec::with_capacity(cfg.max_epochs);

    for epoch in 1..=cfg.max_epochs {
        let tape = Tape::new();
        let leaves: Vec<Tensor<'_>> = params.matrices().into_iter().map(|(_, m)| tape.param(m)).collect();
        let y = params.forward(&leaves, &inputs, cfg, Some(&mut dropout_rng)).map_err(diverged(epoch))?;
        let summed = loss_tensor(y, &labels, &train_idx).map_err(diverged(epoch))?;
        let train_loss = summed.value().get(0, 0);
        if !train_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, reason: format!("loss {train_loss}") });
        }
        // Decay strength is relative to the per-node mean, not the sum.
        let objective = summed.scale(1.0 / train_idx.len() as f64).map_err(|e| diverged(epoch)(e.into()))?;
        tape.backward(objective).map_err(|e| diverged(epoch)(e.into()))?;
        let grads: Vec<Matrix> =
            leaves.iter().map(|l| l.grad().unwrap_or_else(|| Matrix::zeros(l.rows(), l.cols()))).collect();
        drop(tape);
        adam.step(params.matrices_mut(), &grads);

        let y_eval = params.predict_proba(&inputs, cfg).map_err(diverged(epoch))?;
        let s = score(&y_eval, &labels, split)?;
        records.push(EpochRecord {
            epoch,
            train_loss,
            train_acc: s.train_acc,
            val_acc: s.val_acc,
            test_acc: s.test_acc,
        });
        debug!(
            "epoch {epoch}: loss {train_loss:.4} train {:.3} val {:.3} test {:.3}",
            s.train_acc, s.val_acc, s.test_acc
        );
        if epoch % 100 == 0 {
            info!("epoch {epoch}/{}: loss {train_loss:.4} val {:.3}", cfg.max_epochs, s.val_acc);
        }
        if s.val_acc > best.val_acc || (s.val_acc == best.val_acc && s.val_loss < best.val_loss) {
            best = Snapshot { epoch, val_acc: s.val_acc, val_loss: s.val_loss, test_acc: s.test_acc };
            best_params.clone_from(&params);
        }
    }
    let wall_clock_seconds = start.elapsed().as_secs_f64();
    info!(
        "{} depth {}: best val {:.3} at epoch {}, test {:.3}, {wall_clock_seconds:.1}s",
        cfg.model, cfg.depth, best.val_acc, best.epoch, best.test_acc
    );
    Ok(TrainOutcome {
        report: TrainReport {
            records,
            best_val_epoch: best.epoch,
            best_val_acc: best.val_acc,
            test_acc_at_best_val: best.test_acc,
            wall_clock_seconds,
        },
        checkpoint: Checkpoint { config: cfg.clone(), feature_dim: d_x, class_count: d_y, params: best_params },
    })
}

/// Accuracy of a checkpoint on the nodes in `idx`.
pub fn evaluate(checkpoint: &Checkpoint, g: &Graph, idx: &[usize]) -> Result<f64, TrainError> {
    let expected = (checkpoint.feature_dim, checkpoint.class_count);
    let found = (g.feature_dim(), g.class_count());
    if expected != found {
        return Err(TensorError::Shape { op: "evaluate", left: expected, right: found }.into());
    }
    let inputs = GraphInputs::new(g);
    let y = checkpoint.params.predict_proba(&inputs, &checkpoint.config)?;
    Ok(accuracy(&predict(&y), g.labels(), idx)?)
}

/// Trains one independent model per depth with `jobs` worker threads.
/// Rows follow the order of `depths`.
pub fn depth_sweep(
    template: &TrainConfig,
    depths: &[usize],
    g: &Graph,
    split: &Split,
    jobs: usize,
) -> Result<Vec<SweepRow>, TrainError> {
    if depths.is_empty() {
        return Err(TrainError::Config("no depths to sweep".into()));
    }
    let configs: Vec<TrainConfig> = depths.iter().map(|&depth| TrainConfig { depth, ..template.clone() }).collect();
    for c in &configs {
        c.validate()?;
    }
    let run = |cfg: &TrainConfig| -> Result<SweepRow, TrainError> {
        let report = train(cfg, g, split)?.report;
        Ok(SweepRow {
            model: cfg.model.to_string(),
            depth: cfg.depth,
            accuracy: report.test_acc_at_best_val,
            seconds: report.wall_clock_seconds,
        })
    };
    let jobs = jobs.clamp(1, configs.len());
    if jobs == 1 {
        return configs.iter().map(run).collect();
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<SweepRow, TrainError>>>> =
        Mutex::new((0..configs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let k = next.fetch_add(1, Ordering::SeqCst);
                let Some(cfg) = configs.get(k) else { break };
                let row = run(cfg);
                results.lock().expect("no poisoned workers")[k] = Some(row);
            });
        }
    });
    results.into_inner().expect("no poisoned workers").into_iter().map(|r| r.expect("every job ran")).collect()
}
