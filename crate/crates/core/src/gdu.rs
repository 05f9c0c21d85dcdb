//! Gated diffusive unit.
//!
//! Each cell maps the diffused neighbourhood `z`, the previous state `h` and
//! the residual input `x̃` of every node to its next state. Inputs are
//! `[nodes × d_h]` matrices, one row per node; a single node is a 1-row
//! matrix.
//!
//! Both variants first apply the adjustment and evolving gates:
//!
//! ```text
//! f = σ(W_f [x̃ ⊔ z ⊔ h]),  z̃ = f ⊗ z
//! e = σ(W_e [x̃ ⊔ z ⊔ h]),  h̃ = e ⊗ h
//! ```
//!
//! The full cell mixes four `tanh(W_u [...])` candidates with the selection
//! gates `g` and `r`; the simplified cell drops `r`, narrows `g` to
//! `[z̃ ⊔ h̃]` and adds the residual through its own projection `W'_u`.

use rand::Rng;

use crate::tensor::{Matrix, Tape, Tensor, TensorError};

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GduVariant {
    Full,
    Simplified,
}

impl std::str::FromStr for GduVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(GduVariant::Full),
            "simplified" => Ok(GduVariant::Simplified),
            other => Err(format!("unknown GDU variant {other:?} (expected full|simplified)")),
        }
    }
}

impl std::fmt::Display for GduVariant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            GduVariant::Full => "full",
            GduVariant::Simplified => "simplified",
        })
    }
}

/// Weights of the full cell for hidden size `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GduFullParams {
    /// `d × 3d`
    pub w_f: Matrix,
    /// `d × 3d`
    pub w_e: Matrix,
    /// `d × 3d`, shared by all four candidate branches
    pub w_u: Matrix,
    /// `d × 5d`
    pub w_g: Matrix,
    /// `d × 5d`
    pub w_r: Matrix,
}

impl GduFullParams {
    pub fn zeros(d: usize) -> Self {
        GduFullParams {
            w_f: Matrix::zeros(d, 3 * d),
            w_e: Matrix::zeros(d, 3 * d),
            w_u: Matrix::zeros(d, 3 * d),
            w_g: Matrix::zeros(d, 5 * d),
            w_r: Matrix::zeros(d, 5 * d),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        GduFullParams {
            w_f: Matrix::glorot(d, 3 * d, rng),
            w_e: Matrix::glorot(d, 3 * d, rng),
            w_u: Matrix::glorot(d, 3 * d, rng),
            w_g: Matrix::glorot(d, 5 * d, rng),
            w_r: Matrix::glorot(d, 5 * d, rng),
        }
    }

    pub fn named(&self) -> [(&'static str, &Matrix); 5] {
        [("w_f", &self.w_f), ("w_e", &self.w_e), ("w_u", &self.w_u), ("w_g", &self.w_g), ("w_r", &self.w_r)]
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> FullCell<'t> {
        FullCell {
            w_f: tape.param(&self.w_f),
            w_e: tape.param(&self.w_e),
            w_u: tape.param(&self.w_u),
            w_g: tape.param(&self.w_g),
            w_r: tape.param(&self.w_r),
        }
    }
}

/// Weights of the simplified cell for hidden size `d`.
#[derive(Clone, Debug, PartialEq)]
pub struct GduSimplifiedParams {
    /// `d × 2d`
    pub w_u: Matrix,
    /// `d × d`; may be shared between layers
    pub w_u_prime: Matrix,
    /// `d × 2d`
    pub w_g: Matrix,
    /// `d × 3d`
    pub w_f: Matrix,
    /// `d × 3d`
    pub w_e: Matrix,
}

impl GduSimplifiedParams {
    pub fn zeros(d: usize) -> Self {
        GduSimplifiedParams {
            w_u: Matrix::zeros(d, 2 * d),
            w_u_prime: Matrix::zeros(d, d),
            w_g: Matrix::zeros(d, 2 * d),
            w_f: Matrix::zeros(d, 3 * d),
            w_e: Matrix::zeros(d, 3 * d),
        }
    }

    pub fn glorot<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Self {
        GduSimplifiedParams {
            w_u: Matrix::glorot(d, 2 * d, rng),
            w_u_prime: Matrix::glorot(d, d, rng),
            w_g: Matrix::glorot(d, 2 * d, rng),
            w_f: Matrix::glorot(d, 3 * d, rng),
            w_e: Matrix::glorot(d, 3 * d, rng),
        }
    }

    pub fn named(&self) -> [(&'static str, &Matrix); 5] {
        [("w_u", &self.w_u), ("w_u_prime", &self.w_u_prime), ("w_g", &self.w_g), ("w_f", &self.w_f), ("w_e", &self.w_e)]
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> SimplifiedCell<'t> {
        SimplifiedCell {
            w_u: tape.param(&self.w_u),
            w_u_prime: tape.param(&self.w_u_prime),
            w_g: tape.param(&self.w_g),
            w_f: tape.param(&self.w_f),
            w_e: tape.param(&self.w_e),
        }
    }
}

/// Per-node cell inputs, each `[nodes × d]`.
#[derive(Clone, Copy, Debug)]
pub struct CellInputs<'t> {
    /// diffused neighbourhood representation
    pub z: Tensor<'t>,
    /// lower-layer state
    pub h: Tensor<'t>,
    /// graph residual term
    pub x_res: Tensor<'t>,
}

/// Gate activations, each `[nodes × d]` and strictly inside `(0, 1)`.
#[derive(Clone, Debug)]
pub struct GateValues {
    pub f: Matrix,
    pub e: Matrix,
    pub g: Matrix,
    /// absent for the simplified cell
    pub r: Option<Matrix>,
}

fn check_weight(name: &'static str, w: &Tensor<'_>, expected: (usize, usize)) -> Result<(), TensorError> {
    if w.shape() != expected {
        return Err(TensorError::Shape { op: name, left: w.shape(), right: expected });
    }
    Ok(())
}

fn check_inputs(inputs: &CellInputs<'_>) -> Result<usize, TensorError> {
    let shape = inputs.z.shape();
    for other in [inputs.h, inputs.x_res] {
        if other.shape() != shape {
            return Err(TensorError::Shape { op: "gdu inputs", left: shape, right: other.shape() });
        }
    }
    Ok(shape.1)
}

struct Adjusted<'t> {
    f: Tensor<'t>,
    e: Tensor<'t>,
    z_adj: Tensor<'t>,
    h_adj: Tensor<'t>,
    xzh: Tensor<'t>,
}

fn adjust<'t>(w_f: &Tensor<'t>, w_e: &Tensor<'t>, inputs: &CellInputs<'t>) -> Result<Adjusted<'t>, TensorError> {
    let xzh = Tensor::concat_cols(&[inputs.x_res, inputs.z, inputs.h])?;
    let f = xzh.matmul_t(w_f)?.sigmoid()?;
    let e = xzh.matmul_t(w_e)?.sigmoid()?;
    Ok(Adjusted { z_adj: f.mul(&inputs.z)?, h_adj: e.mul(&inputs.h)?, f, e, xzh })
}

/// Full cell bound to tape leaves.
#[derive(Clone, Copy, Debug)]
pub struct FullCell<'t> {
    pub w_f: Tensor<'t>,
    pub w_e: Tensor<'t>,
    pub w_u: Tensor<'t>,
    pub w_g: Tensor<'t>,
    pub w_r: Tensor<'t>,
}

impl<'t> FullCell<'t> {
    fn check(&self, inputs: &CellInputs<'t>) -> Result<(), TensorError> {
        let d = check_inputs(inputs)?;
        check_weight("gdu w_f", &self.w_f, (d, 3 * d))?;
        check_weight("gdu w_e", &self.w_e, (d, 3 * d))?;
        check_weight("gdu w_u", &self.w_u, (d, 3 * d))?;
        check_weight("gdu w_g", &self.w_g, (d, 5 * d))?;
        check_weight("gdu w_r", &self.w_r, (d, 5 * d))
    }

    fn selection(&self, inputs: &CellInputs<'t>, adj: &Adjusted<'t>) -> Result<(Tensor<'t>, Tensor<'t>), TensorError> {
        let all = Tensor::concat_cols(&[inputs.x_res, inputs.z, inputs.h, adj.z_adj, adj.h_adj])?;
        Ok((all.matmul_t(&self.w_g)?.sigmoid()?, all.matmul_t(&self.w_r)?.sigmoid()?))
    }

    pub fn forward(&self, inputs: &CellInputs<'t>) -> Result<Tensor<'t>, TensorError> {
        self.check(inputs)?;
        let adj = adjust(&self.w_f, &self.w_e, inputs)?;
        let (g, r) = self.selection(inputs, &adj)?;
        let (not_g, not_r) = (g.one_minus()?, r.one_minus()?);
        let x = inputs.x_res;
        let candidate = |z: Tensor<'t>, h: Tensor<'t>| -> Result<Tensor<'t>, TensorError> {
            Tensor::concat_cols(&[x, z, h])?.matmul_t(&self.w_u)?.tanh()
        };
        let both = candidate(adj.z_adj, adj.h_adj)?;
        let state_only = candidate(inputs.z, adj.h_adj)?;
        let neigh_only = candidate(adj.z_adj, inputs.h)?;
        let neither = adj.xzh.matmul_t(&self.w_u)?.tanh()?;

        let t1 = g.mul(&r)?.mul(&both)?;
        let t2 = not_g.mul(&r)?.mul(&state_only)?;
        let t3 = g.mul(&not_r)?.mul(&neigh_only)?;
        let t4 = not_g.mul(&not_r)?.mul(&neither)?;
        t1.add(&t2)?.add(&t3)?.add(&t4)
    }

    pub fn gate_values(&self, inputs: &CellInputs<'t>) -> Result<GateValues, TensorError> {
        self.check(inputs)?;
        let adj = adjust(&self.w_f, &self.w_e, inputs)?;
        let (g, r) = self.selection(inputs, &adj)?;
        Ok(GateValues {
            f: (*adj.f.value()).clone(),
            e: (*adj.e.value()).clone(),
            g: (*g.value()).clone(),
            r: Some((*r.value()).clone()),
        })
    }
}

/// Simplified cell bound to tape leaves.
#[derive(Clone, Copy, Debug)]
pub struct SimplifiedCell<'t> {
    pub w_u: Tensor<'t>,
    pub w_u_prime: Tensor<'t>,
    pub w_g: Tensor<'t>,
    pub w_f: Tensor<'t>,
    pub w_e: Tensor<'t>,
}

impl<'t> SimplifiedCell<'t> {
    fn check(&self, inputs: &CellInputs<'t>) -> Result<(), TensorError> {
        let d = check_inputs(inputs)?;
        check_weight("gdu w_u", &self.w_u, (d, 2 * d))?;
        check_weight("gdu w_u_prime", &self.w_u_prime, (d, d))?;
        check_weight("gdu w_g", &self.w_g, (d, 2 * d))?;
        check_weight("gdu w_f", &self.w_f, (d, 3 * d))?;
        check_weight("gdu w_e", &self.w_e, (d, 3 * d))
    }

    pub fn forward(&self, inputs: &CellInputs<'t>) -> Result<Tensor<'t>, TensorError> {
        self.check(inputs)?;
        let adj = adjust(&self.w_f, &self.w_e, inputs)?;
        let adjusted = Tensor::concat_cols(&[adj.z_adj, adj.h_adj])?;
        let g = adjusted.matmul_t(&self.w_g)?.sigmoid()?;
        let gated = g.mul(&adjusted.matmul_t(&self.w_u)?)?;
        let raw = Tensor::concat_cols(&[inputs.z, inputs.h])?.matmul_t(&self.w_u)?;
        let ungated = g.one_minus()?.mul(&raw)?;
        let residual = inputs.x_res.matmul_t(&self.w_u_prime)?;
        gated.add(&ungated)?.add(&residual)?.tanh()
    }

    pub fn gate_values(&self, inputs: &CellInputs<'t>) -> Result<GateValues, TensorError> {
        self.check(inputs)?;
        let adj = adjust(&self.w_f, &self.w_e, inputs)?;
        let g = Tensor::concat_cols(&[adj.z_adj, adj.h_adj])?.matmul_t(&self.w_g)?.sigmoid()?;
        Ok(GateValues { f: (*adj.f.value()).clone(), e: (*adj.e.value()).clone(), g: (*g.value()).clone(), r: None })
    }
}

/// Either cell variant.
#[derive(Clone, Copy, Debug)]
pub enum GduCell<'t> {
    Full(FullCell<'t>),
    Simplified(SimplifiedCell<'t>),
}

impl<'t> GduCell<'t> {
    pub fn forward(&self, inputs: &CellInputs<'t>) -> Result<Tensor<'t>, TensorError> {
        match self {
            GduCell::Full(c) => c.forward(inputs),
            GduCell::Simplified(c) => c.forward(inputs),
        }
    }

    pub fn gate_values(&self, inputs: &CellInputs<'t>) -> Result<GateValues, TensorError> {
        match self {
            GduCell::Full(c) => c.gate_values(inputs),
            GduCell::Simplified(c) => c.gate_values(inputs),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn inputs<'t>(tape: &'t Tape, rows: usize, d: usize, seed: u64) -> CellInputs<'t> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = || tape.constant(Matrix::uniform(rows, d, -2.0, 2.0, &mut rng));
        CellInputs { z: m(), h: m(), x_res: m() }
    }

    #[test]
    fn zero_params_give_zero_output_and_half_gates() {
        let tape = Tape::new();
        let inp = inputs(&tape, 3, 4, 1);
        let full = GduFullParams::zeros(4).bind(&tape);
        assert_eq!(*full.forward(&inp).unwrap().value(), Matrix::zeros(3, 4));
        let gates = full.gate_values(&inp).unwrap();
        for m in [&gates.f, &gates.e, &gates.g, gates.r.as_ref().unwrap()] {
            assert_eq!(*m, Matrix::filled(3, 4, 0.5));
        }
        let simple = GduSimplifiedParams::zeros(4).bind(&tape);
        assert_eq!(*simple.forward(&inp).unwrap().value(), Matrix::zeros(3, 4));
        let gates = simple.gate_values(&inp).unwrap();
        assert!(gates.r.is_none());
        assert_eq!(gates.g, Matrix::filled(3, 4, 0.5));
    }

    #[test]
    fn adjustment_gate_saturates() {
        let tape = Tape::new();
        let ones = tape.constant(Matrix::filled(1, 2, 1.0));
        let inp = CellInputs { z: ones, h: ones, x_res: ones };
        let mut last = 0.0;
        for scale in [0.1, 1.0, 5.0, 20.0] {
            let mut p = GduFullParams::zeros(2);
            p.w_f = Matrix::filled(2, 6, scale);
            let f = p.bind(&tape).gate_values(&inp).unwrap().f;
            assert!(f.get(0, 0) > last);
            last = f.get(0, 0);
        }
        assert!(last > 1.0 - 1e-9);
    }

    #[test]
    fn shape_errors() {
        let tape = Tape::new();
        let inp = inputs(&tape, 2, 3, 2);
        let wrong = GduFullParams::zeros(4).bind(&tape);
        assert!(matches!(wrong.forward(&inp), Err(TensorError::Shape { .. })));
        let bad = CellInputs { z: inp.z, h: tape.constant(Matrix::zeros(2, 2)), x_res: inp.x_res };
        let cell = GduSimplifiedParams::zeros(3).bind(&tape);
        assert!(matches!(cell.forward(&bad), Err(TensorError::Shape { op: "gdu inputs", .. })));
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("full".parse::<GduVariant>().unwrap(), GduVariant::Full);
        assert_eq!("simplified".parse::<GduVariant>().unwrap(), GduVariant::Simplified);
        assert!("lstm".parse::<GduVariant>().is_err());
    }
}
