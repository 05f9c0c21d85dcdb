//! Finite-difference gradient suite over every differentiable component.
//!
//! Analytic gradients come from the tape. Numeric gradients are central
//! differences of the straight-line reference evaluated in double-double
//! precision, so rounding noise in the objective (about one `f64` ulp) does
//! not swamp small gradient entries.

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::diffusion::{diffuse, DiffusionRoute};
use crate::gcn::{gcn_forward, GcnParams};
use crate::gdu::{CellInputs, FullCell, GduVariant, SimplifiedCell};
use crate::graph::build_mask;
use crate::model::{forward, loss_tensor, DifNetParams, GraphInputs, ModelConfig, ModelError, ParamSet};
use crate::reference::{self, central_differences, Dd, Real, RefDifNetLayout, RefFull, RefMatrix, RefSimplified};
use crate::tensor::{relative_error, Matrix, Tape, Tensor};
use crate::toy;

pub const FD_EPS: f64 = 1e-6;
pub const GRAD_TOLERANCE: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckResult {
    pub name: &'static str,
    pub parameters: usize,
    pub max_rel_error: f64,
}

impl GradCheckResult {
    pub fn passed(&self) -> bool {
        self.max_rel_error < GRAD_TOLERANCE
    }
}

/// Tape gradients of `f` at `params`.
fn analytic<F>(f: F, params: &[Matrix]) -> Result<Vec<Matrix>, ModelError>
where
    F: for<'t> Fn(&[Tensor<'t>]) -> Result<Tensor<'t>, ModelError>,
{
    let tape = Tape::new();
    let leaves: Vec<Tensor<'_>> = params.iter().map(|p| tape.param(p)).collect();
    let out = f(&leaves)?;
    tape.backward(out)?;
    Ok(leaves.iter().zip(params).map(|(l, p)| l.grad().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))).collect())
}

fn compare(name: &'static str, analytic: &[Matrix], numeric: &[Matrix]) -> GradCheckResult {
    let mut worst: f64 = 0.0;
    let mut parameters = 0;
    for (a, n) in analytic.iter().zip(numeric) {
        parameters += a.len();
        for (&x, &y) in a.data().iter().zip(n.data()) {
            worst = worst.max(relative_error(x, y));
        }
    }
    GradCheckResult { name, parameters, max_rel_error: worst }
}

fn uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::uniform(rows, cols, -1.0, 1.0, rng)
}

/// Weighted sum `Σ out ⊙ c`, so every output entry gets a distinct seed.
fn project<'t>(out: Tensor<'t>, c: &Arc<Matrix>) -> Result<Tensor<'t>, ModelError> {
    Ok(out.mul_const(Arc::clone(c))?.sum()?)
}

fn project_ref(out: &RefMatrix<Dd>, c: &Matrix) -> Dd {
    let mut total = Dd::zero();
    for (r, row) in out.iter().enumerate() {
        for (k, &v) in row.iter().enumerate() {
            total = total + v * Dd::from_f64(c.get(r, k));
        }
    }
    total
}

fn cell_instance(seed: u64, d: usize, widths: [usize; 5]) -> (Vec<Matrix>, Arc<Matrix>) {
    let n = 3;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params: Vec<Matrix> = widths.iter().map(|&k| uniform(d, k * d, &mut rng)).collect();
    params.extend((0..3).map(|_| uniform(n, d, &mut rng)));
    (params, Arc::new(uniform(n, d, &mut rng)))
}

fn gdu_full() -> Result<GradCheckResult, ModelError> {
    let (params, c) = cell_instance(11, 4, [3, 3, 3, 5, 5]);
    let a = analytic(
        |t| {
            let cell = FullCell { w_f: t[0], w_e: t[1], w_u: t[2], w_g: t[3], w_r: t[4] };
            project(cell.forward(&CellInputs { z: t[5], h: t[6], x_res: t[7] })?, &c)
        },
        &params,
    )?;
    let n = central_differences::<Dd, _>(
        |p| {
            let cell = RefFull { w: [&p[0], &p[1], &p[2], &p[3], &p[4]] };
            let out: RefMatrix<Dd> = (0..p[5].len()).map(|i| cell.step(&p[5][i], &p[6][i], &p[7][i])).collect();
            project_ref(&out, &c)
        },
        &params,
        FD_EPS,
    );
    Ok(compare("gdu_full", &a, &n))
}

fn gdu_simplified() -> Result<GradCheckResult, ModelError> {
    let (params, c) = cell_instance(12, 3, [2, 1, 2, 3, 3]);
    let a = analytic(
        |t| {
            let cell = SimplifiedCell { w_u: t[0], w_u_prime: t[1], w_g: t[2], w_f: t[3], w_e: t[4] };
            project(cell.forward(&CellInputs { z: t[5], h: t[6], x_res: t[7] })?, &c)
        },
        &params,
    )?;
    let n = central_differences::<Dd, _>(
        |p| {
            let cell = RefSimplified { w: [&p[0], &p[1], &p[2], &p[3], &p[4]] };
            let out: RefMatrix<Dd> = (0..p[5].len()).map(|i| cell.step(&p[5][i], &p[6][i], &p[7][i])).collect();
            project_ref(&out, &c)
        },
        &params,
        FD_EPS,
    );
    Ok(compare("gdu_simplified", &a, &n))
}

fn diffusion(name: &'static str, route: DiffusionRoute) -> Result<GradCheckResult, ModelError> {
    let g = toy::six_node();
    let mask = build_mask(&g);
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let params = vec![uniform(6, 4, &mut rng)];
    let c = Arc::new(uniform(6, 4, &mut rng));
    let a = analytic(|t| project(diffuse(t[0], &mask, route)?, &c), &params)?;
    let n = central_differences::<Dd, _>(
        |p| {
            let z: RefMatrix<Dd> = (0..6).map(|i| reference::diffuse_node(&g, &p[0], i)).collect();
            project_ref(&z, &c)
        },
        &params,
        FD_EPS,
    );
    Ok(compare(name, &a, &n))
}

fn difnet(name: &'static str, variant: GduVariant) -> Result<GradCheckResult, ModelError> {
    let g = toy::six_node();
    let split = toy::six_node_split();
    let inputs = GraphInputs::new(&g);
    let cfg = ModelConfig {
        depth: 3,
        hidden: 4,
        gdu_variant: variant,
        dropout_rate: 0.0,
        seed: 21,
        ..ModelConfig::default()
    };
    let model = DifNetParams::init(&cfg, g.feature_dim(), g.class_count())?;
    let params: Vec<Matrix> = model.matrices().into_iter().map(|(_, m)| m.clone()).collect();
    let labels: Arc<[usize]> = g.labels().into();
    let idx: Arc<[usize]> = split.train.as_slice().into();
    let a = analytic(|t| loss_tensor(forward(&model.bind_tensors(t)?, &inputs, &cfg, None)?, &labels, &idx), &params)?;
    let layout = RefDifNetLayout { depth: cfg.depth, variant, residual: cfg.residual };
    let n = central_differences::<Dd, _>(
        |p| reference::nll(&reference::difnet_forward(&g, layout, p), &labels, &idx),
        &params,
        FD_EPS,
    );
    Ok(compare(name, &a, &n))
}

fn gcn() -> Result<GradCheckResult, ModelError> {
    let g = toy::six_node();
    let split = toy::six_node_split();
    let inputs = GraphInputs::new(&g);
    let params = GcnParams::init(3, g.feature_dim(), 4, g.class_count(), 22)?.weights;
    let labels: Arc<[usize]> = g.labels().into();
    let idx: Arc<[usize]> = split.train.as_slice().into();
    let a = analytic(|t| loss_tensor(gcn_forward(t, &inputs, 0.0, None)?, &labels, &idx), &params)?;
    let n = central_differences::<Dd, _>(
        |p| reference::nll(&reference::gcn_forward(&g, p), &labels, &idx),
        &params,
        FD_EPS,
    );
    Ok(compare("gcn_depth3", &a, &n))
}

/// Runs every check on fixed toy instances.
pub fn gradient_suite() -> Result<Vec<GradCheckResult>, ModelError> {
    Ok(vec![
        gdu_full()?,
        gdu_simplified()?,
        diffusion("diffusion_dense", DiffusionRoute::Dense)?,
        diffusion("diffusion_sparse", DiffusionRoute::Sparse)?,
        difnet("difnet_full_k3", GduVariant::Full)?,
        difnet("difnet_simplified_k3", GduVariant::Simplified)?,
        gcn()?,
    ])
}
