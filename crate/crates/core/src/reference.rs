//! Straight-line reference implementation, one node and one formula at a
//! time, generic over the float type.
//!
//! Shares no code with the tape: used as an equivalence oracle in `f64` and,
//! in double-double precision, as the objective for finite differences whose
//! rounding noise stays far below the gradients being checked.

use std::ops::{Add, Div, Mul, Neg, Sub};

use crate::gdu::GduVariant;
use crate::graph::Graph;
use crate::model::ResidualKind;
use crate::tensor::Matrix;

use twofloat::TwoFloat;

/// Scalar arithmetic the reference needs.
pub trait Real:
    Copy
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
}

/// Double-double scalar. Arithmetic comes from `twofloat` except division,
/// which is done by long division with exact remainders; `twofloat`'s own
/// quotient is only `f64`-accurate.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd)]
pub struct Dd(pub TwoFloat);

impl Add for Dd {
    type Output = Dd;
    fn add(self, o: Dd) -> Dd {
        Dd(self.0 + o.0)
    }
}

impl Sub for Dd {
    type Output = Dd;
    fn sub(self, o: Dd) -> Dd {
        Dd(self.0 - o.0)
    }
}

impl Mul for Dd {
    type Output = Dd;
    fn mul(self, o: Dd) -> Dd {
        Dd(self.0 * o.0)
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, o: Dd) -> Dd {
        let b = o.0.hi();
        let q1 = self.0.hi() / b;
        let r = self.0 - o.0 * q1;
        let q2 = r.hi() / b;
        let r = r - o.0 * q2;
        let q3 = r.hi() / b;
        Dd(TwoFloat::from(q1) + q2 + q3)
    }
}

impl Neg for Dd {
    type Output = Dd;
    fn neg(self) -> Dd {
        Dd(-self.0)
    }
}

/// Exponential accurate to roughly 1e-30 relative.
fn dd_exp(a: Dd) -> Dd {
    if a.0.hi() < -700.0 {
        return Dd::zero();
    }
    assert!(a.0.hi() < 700.0, "reference exp overflow at {}", a.0.hi());
    let k = (a.0.hi() / std::f64::consts::LN_2).round();
    // |r| <= ln2/2, then r / 1024 keeps the series short
    let s = (a.0 - twofloat::consts::LN_2 * k) * (1.0 / 1024.0);
    let mut term = Dd::one();
    let mut sum = Dd::one();
    for n in 1..=16 {
        term = term * Dd(s) / Dd::from_f64(n as f64);
        sum = sum + term;
    }
    for _ in 0..10 {
        sum = sum * sum;
    }
    Dd(sum.0 * 2f64.powi(k as i32))
}

/// Logarithm by Newton steps on [`dd_exp`].
fn dd_ln(a: Dd) -> Dd {
    assert!(a.0.hi() > 0.0, "reference ln of non-positive value");
    let mut y = Dd::from_f64(a.0.hi().ln());
    for _ in 0..2 {
        y = y + a * dd_exp(-y) - Dd::one();
    }
    y
}

impl Real for Dd {
    fn from_f64(v: f64) -> Self {
        Dd(TwoFloat::from(v))
    }
    fn to_f64(self) -> f64 {
        self.0.hi() + self.0.lo()
    }
    fn exp(self) -> Self {
        dd_exp(self)
    }
    fn ln(self) -> Self {
        dd_ln(self)
    }
    fn sqrt(self) -> Self {
        // Newton refinement of the f64 root
        let y = Dd::from_f64(self.0.hi().sqrt());
        (y + self / y) / Dd::from_f64(2.0)
    }
}

/// Row-major nested vectors.
pub type RefMatrix<F> = Vec<Vec<F>>;

fn c<F: Real>(v: f64) -> F {
    F::from_f64(v)
}

pub fn lift<F: Real>(m: &Matrix) -> RefMatrix<F> {
    (0..m.rows()).map(|r| m.row(r).iter().map(|&v| c(v)).collect()).collect()
}

pub fn lower<F: Real>(m: &RefMatrix<F>) -> Matrix {
    Matrix::from_rows(&m.iter().map(|r| r.iter().map(|v| v.to_f64()).collect::<Vec<f64>>()).collect::<Vec<_>>())
}

fn matvec<F: Real>(w: &RefMatrix<F>, v: &[F]) -> Vec<F> {
    w.iter()
        .map(|row| {
            assert_eq!(row.len(), v.len(), "reference matvec width");
            row.iter().zip(v).fold(F::zero(), |acc, (&a, &b)| acc + a * b)
        })
        .collect()
}

fn cat<F: Real>(parts: &[&[F]]) -> Vec<F> {
    parts.iter().flat_map(|p| p.iter().copied()).collect()
}

fn sigmoid<F: Real>(x: F) -> F {
    F::one() / (F::one() + (-x).exp())
}

fn tanh<F: Real>(x: F) -> F {
    let (p, m) = (x.exp(), (-x).exp());
    (p - m) / (p + m)
}

/// Gate vectors of one node.
#[derive(Clone, Debug)]
pub struct RefGates<F> {
    pub f: Vec<F>,
    pub e: Vec<F>,
    pub g: Vec<F>,
    pub r: Option<Vec<F>>,
}

/// Full-cell weights in `w_f, w_e, w_u, w_g, w_r` order.
pub struct RefFull<'a, F> {
    pub w: [&'a RefMatrix<F>; 5],
}

/// Simplified-cell weights in `w_u, w_u_prime, w_g, w_f, w_e` order.
pub struct RefSimplified<'a, F> {
    pub w: [&'a RefMatrix<F>; 5],
}

fn adjust<F: Real>(
    w_f: &RefMatrix<F>,
    w_e: &RefMatrix<F>,
    z: &[F],
    h: &[F],
    x: &[F],
) -> (Vec<F>, Vec<F>, Vec<F>, Vec<F>) {
    let xzh = cat(&[x, z, h]);
    let f: Vec<F> = matvec(w_f, &xzh).into_iter().map(sigmoid).collect();
    let e: Vec<F> = matvec(w_e, &xzh).into_iter().map(sigmoid).collect();
    let z_adj = f.iter().zip(z).map(|(&a, &b)| a * b).collect();
    let h_adj = e.iter().zip(h).map(|(&a, &b)| a * b).collect();
    (f, e, z_adj, h_adj)
}

impl<F: Real> RefFull<'_, F> {
    pub fn gates(&self, z: &[F], h: &[F], x: &[F]) -> RefGates<F> {
        let [w_f, w_e, _, w_g, w_r] = self.w;
        let (f, e, z_adj, h_adj) = adjust(w_f, w_e, z, h, x);
        let all = cat(&[x, z, h, &z_adj, &h_adj]);
        let g = matvec(w_g, &all).into_iter().map(sigmoid).collect();
        let r = matvec(w_r, &all).into_iter().map(sigmoid).collect();
        RefGates { f, e, g, r: Some(r) }
    }

    pub fn step(&self, z: &[F], h: &[F], x: &[F]) -> Vec<F> {
        let [w_f, w_e, w_u, _, _] = self.w;
        let (_, _, z_adj, h_adj) = adjust(w_f, w_e, z, h, x);
        let gates = self.gates(z, h, x);
        let r = gates.r.expect("full cell has r");
        let u = |zz: &[F], hh: &[F]| -> Vec<F> { matvec(w_u, &cat(&[x, zz, hh])).into_iter().map(tanh).collect() };
        let (u1, u2, u3, u4) = (u(&z_adj, &h_adj), u(z, &h_adj), u(&z_adj, h), u(z, h));
        (0..z.len())
            .map(|i| {
                let (g, r) = (gates.g[i], r[i]);
                let (ng, nr) = (F::one() - g, F::one() - r);
                g * r * u1[i] + ng * r * u2[i] + g * nr * u3[i] + ng * nr * u4[i]
            })
            .collect()
    }
}

impl<F: Real> RefSimplified<'_, F> {
    pub fn gates(&self, z: &[F], h: &[F], x: &[F]) -> RefGates<F> {
        let [_, _, w_g, w_f, w_e] = self.w;
        let (f, e, z_adj, h_adj) = adjust(w_f, w_e, z, h, x);
        let g = matvec(w_g, &cat(&[&z_adj, &h_adj])).into_iter().map(sigmoid).collect();
        RefGates { f, e, g, r: None }
    }

    pub fn step(&self, z: &[F], h: &[F], x: &[F]) -> Vec<F> {
        let [w_u, w_u_prime, _, w_f, w_e] = self.w;
        let (_, _, z_adj, h_adj) = adjust(w_f, w_e, z, h, x);
        let g = self.gates(z, h, x).g;
        let gated = matvec(w_u, &cat(&[&z_adj, &h_adj]));
        let plain = matvec(w_u, &cat(&[z, h]));
        let res = matvec(w_u_prime, x);
        (0..z.len()).map(|i| tanh(g[i] * gated[i] + (F::one() - g[i]) * plain[i] + res[i])).collect()
    }
}

/// Closed neighbourhood of `i`, ascending.
fn neighbourhood(g: &Graph, i: usize) -> Vec<usize> {
    (0..g.node_count()).filter(|&j| j == i || g.edge_weight(i, j) > 0.0).collect()
}

/// Influence weights `ω_ij = exp(⟨h_i,h_j⟩/√d) / Σ_k exp(⟨h_i,h_k⟩/√d)`
/// over the closed neighbourhood of `i`, and `z_i = Σ_j ω_ij h_j`.
pub fn diffuse_node<F: Real>(g: &Graph, h: &RefMatrix<F>, i: usize) -> Vec<F> {
    let d = h[i].len();
    let scale = F::one() / c::<F>(d as f64).sqrt();
    let support = neighbourhood(g, i);
    let score = |j: usize| (h[i].iter().zip(&h[j]).fold(F::zero(), |a, (&x, &y)| a + x * y) * scale).exp();
    let total = support.iter().fold(F::zero(), |a, &j| a + score(j));
    let mut z = vec![F::zero(); d];
    for &j in &support {
        let w = score(j) / total;
        for (zk, &hk) in z.iter_mut().zip(&h[j]) {
            *zk = *zk + w * hk;
        }
    }
    z
}

/// Entry `(i, j)` of `D̃^{-1/2}(A+I)D̃^{-1/2}`.
pub fn normalized_adjacency_entry(g: &Graph, i: usize, j: usize) -> f64 {
    let n = g.node_count();
    let a = |p: usize, q: usize| g.edge_weight(p, q) + if p == q { 1.0 } else { 0.0 };
    let deg = |p: usize| (0..n).map(|q| a(p, q)).sum::<f64>();
    a(i, j) / (deg(i) * deg(j)).sqrt()
}

fn propagate<F: Real>(g: &Graph, m: &RefMatrix<F>) -> RefMatrix<F> {
    let n = g.node_count();
    (0..n)
        .map(|i| {
            let mut row = vec![F::zero(); m[0].len()];
            for (j, mj) in m.iter().enumerate() {
                let a: F = c(normalized_adjacency_entry(g, i, j));
                if a != F::zero() {
                    for (r, &v) in row.iter_mut().zip(mj) {
                        *r = *r + a * v;
                    }
                }
            }
            row
        })
        .collect()
}

fn softmax<F: Real>(v: &[F]) -> Vec<F> {
    let m = v.iter().copied().fold(v[0], F::max);
    let e: Vec<F> = v.iter().map(|&x| (x - m).exp()).collect();
    let s = e.iter().fold(F::zero(), |a, &b| a + b);
    e.into_iter().map(|x| x / s).collect()
}

/// Shape of a DifNet parameter list.
#[derive(Clone, Copy, Debug)]
pub struct RefDifNetLayout {
    pub depth: usize,
    pub variant: GduVariant,
    pub residual: ResidualKind,
}

/// Evaluation-mode DifNet probabilities, node by node. `params` follows the
/// model's parameter order: `w_emb, w_x`, per layer the cell weights, the
/// shared `w_u_prime` for the simplified cell, then `w_fc`.
pub fn difnet_forward<F: Real>(g: &Graph, layout: RefDifNetLayout, params: &[RefMatrix<F>]) -> RefMatrix<F> {
    let per_layer = match layout.variant {
        GduVariant::Full => 5,
        GduVariant::Simplified => 4,
    };
    let shared = usize::from(layout.variant == GduVariant::Simplified);
    assert_eq!(params.len(), 3 + layout.depth * per_layer + shared, "reference parameter count");
    let n = g.node_count();
    let x: RefMatrix<F> = lift(g.features());
    let x_emb: RefMatrix<F> = (0..n).map(|i| matvec(&params[0], &x[i])).collect();
    let mut h: RefMatrix<F> = (0..n).map(|i| matvec(&params[1], &x_emb[i])).collect();
    for k in 0..layout.depth {
        let residual = match layout.residual {
            ResidualKind::Naive => h.clone(),
            ResidualKind::Raw => x_emb.clone(),
            ResidualKind::GraphNaive => propagate(g, &h),
            ResidualKind::GraphRaw => propagate(g, &x_emb),
        };
        let base = 2 + k * per_layer;
        let next = (0..n)
            .map(|i| {
                let z = diffuse_node(g, &h, i);
                match layout.variant {
                    GduVariant::Full => {
                        let w =
                            [&params[base], &params[base + 1], &params[base + 2], &params[base + 3], &params[base + 4]];
                        RefFull { w }.step(&z, &h[i], &residual[i])
                    }
                    GduVariant::Simplified => {
                        // layer order is w_u, w_g, w_f, w_e; w_u_prime sits after the layers
                        let w_u_prime = &params[2 + layout.depth * per_layer];
                        let w = [&params[base], w_u_prime, &params[base + 1], &params[base + 2], &params[base + 3]];
                        RefSimplified { w }.step(&z, &h[i], &residual[i])
                    }
                }
            })
            .collect();
        h = next;
    }
    let w_fc = params.last().expect("w_fc");
    h.iter().map(|hi| softmax(&matvec(w_fc, hi))).collect()
}

/// Evaluation-mode GCN probabilities, node by node.
pub fn gcn_forward<F: Real>(g: &Graph, weights: &[RefMatrix<F>]) -> RefMatrix<F> {
    let mut h: RefMatrix<F> = lift(g.features());
    for (k, w) in weights.iter().enumerate() {
        let projected: RefMatrix<F> = h.iter().map(|hi| matvec(w, hi)).collect();
        let mixed = propagate(g, &projected);
        h = if k + 1 == weights.len() {
            mixed.iter().map(|row| softmax(row)).collect()
        } else {
            mixed.into_iter().map(|row| row.into_iter().map(|v| v.max(F::zero())).collect()).collect()
        };
    }
    h
}

/// `Σ_{i∈idx} Σ_d −y_i(d) ln max(ŷ_i(d), 1e-12)` with one-hot `y`.
pub fn nll<F: Real>(y_hat: &RefMatrix<F>, labels: &[usize], idx: &[usize]) -> F {
    let floor: F = c(1e-12);
    let mut total = F::zero();
    for &i in idx {
        for (d, &p) in y_hat[i].iter().enumerate() {
            let y = if labels[i] == d { F::one() } else { F::zero() };
            total = total - y * p.max(floor).ln();
        }
    }
    total
}

/// Central differences `(f(θ+ε) − f(θ−ε)) / 2ε` for every entry of every
/// parameter, with the objective evaluated in type `F`.
pub fn central_differences<F, O>(objective: O, params: &[Matrix], eps: f64) -> Vec<Matrix>
where
    F: Real,
    O: Fn(&[RefMatrix<F>]) -> F,
{
    let mut work: Vec<RefMatrix<F>> = params.iter().map(lift).collect();
    let step: F = c(eps);
    let mut out = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let (rows, cols) = params[p].shape();
        let mut grad = Matrix::zeros(rows, cols);
        for r in 0..rows {
            for k in 0..cols {
                let orig = work[p][r][k];
                work[p][r][k] = orig + step;
                let up = objective(&work);
                work[p][r][k] = orig - step;
                let down = objective(&work);
                work[p][r][k] = orig;
                grad.set(r, k, ((up - down) / (step + step)).to_f64());
            }
        }
        out.push(grad);
    }
    out
}
