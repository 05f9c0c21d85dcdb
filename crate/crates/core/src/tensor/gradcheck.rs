use super::{Matrix, Tape, Tensor, TensorError};

/// `|analytic − numeric| / max(1e-8, |analytic| + |numeric|)`
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Largest relative error between tape gradients of a scalar objective and
/// central finite differences, over every entry of every parameter.
pub fn grad_check<F, E>(f: F, params: &[Matrix], eps: f64) -> Result<f64, E>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, E>,
    E: From<TensorError>,
{
    Ok(grad_check_per_param(f, params, eps)?.into_iter().fold(0.0, f64::max))
}

/// Same as [`grad_check`], reported per parameter.
///
/// `f` is called on a fresh tape each time with one trainable leaf per
/// entry of `params`; it must be deterministic.
pub fn grad_check_per_param<F, E>(f: F, params: &[Matrix], eps: f64) -> Result<Vec<f64>, E>
where
    F: for<'t> Fn(&'t Tape, &[Tensor<'t>]) -> Result<Tensor<'t>, E>,
    E: From<TensorError>,
{
    assert!(eps > 0.0, "eps must be positive");
    let tape = Tape::new();
    let leaves: Vec<Tensor<'_>> = params.iter().map(|p| tape.param(p)).collect();
    let loss = f(&tape, &leaves)?;
    scalar_value(loss)?;
    tape.backward(loss)?;
    let analytic: Vec<Matrix> =
        leaves.iter().zip(params).map(|(l, p)| l.grad().unwrap_or_else(|| Matrix::zeros(p.rows(), p.cols()))).collect();

    let eval = |values: &[Matrix]| -> Result<f64, E> {
        let tape = Tape::new();
        let leaves: Vec<Tensor<'_>> = values.iter().map(|p| tape.param(p)).collect();
        let out = f(&tape, &leaves)?;
        Ok(scalar_value(out)?)
    };

    let mut work: Vec<Matrix> = params.to_vec();
    let mut worst = Vec::with_capacity(params.len());
    for p in 0..params.len() {
        let mut max_err: f64 = 0.0;
        for k in 0..params[p].len() {
            let orig = params[p].data()[k];
            work[p].data_mut()[k] = orig + eps;
            let up = eval(&work)?;
            work[p].data_mut()[k] = orig - eps;
            let down = eval(&work)?;
            work[p].data_mut()[k] = orig;
            let numeric = (up - down) / (2.0 * eps);
            max_err = max_err.max(relative_error(analytic[p].data()[k], numeric));
        }
        worst.push(max_err);
    }
    Ok(worst)
}

fn scalar_value(t: Tensor<'_>) -> Result<f64, TensorError> {
    let (rows, cols) = t.shape();
    if (rows, cols) != (1, 1) {
        return Err(TensorError::NonScalarLoss { rows, cols });
    }
    let v = t.value().get(0, 0);
    if !v.is_finite() {
        return Err(TensorError::Evaluation { value: v });
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quadratic_form_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = Matrix::uniform(3, 3, -1.0, 1.0, &mut rng);
        let x = Matrix::uniform(3, 1, -1.0, 1.0, &mut rng);
        let err = grad_check(
            |tape: &Tape, p: &[Tensor]| -> Result<_, TensorError> {
                let a = tape.constant(a.clone());
                let ax = a.matmul(&p[0])?;
                ax.mul(&p[0])?.sum()
            },
            &[x],
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-9, "{err}");
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1.0, 1.1) - 0.1 / 2.1).abs() < 1e-15);
        assert!((relative_error(0.0, 1e-9) - 0.1).abs() < 1e-12);
    }
}
