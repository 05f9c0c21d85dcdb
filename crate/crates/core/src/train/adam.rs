use crate::tensor::Matrix;

/// Adam with L2 weight decay folded into the gradient (`g + λw`).
#[derive(Clone, Debug)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(learning_rate: f64, weight_decay: f64) -> Self {
        Adam { learning_rate, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, step: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update of every parameter; `grads[k]` pairs with `params[k]`.
    pub fn step(&mut self, params: Vec<&mut Matrix>, grads: &[Matrix]) {
        assert_eq!(params.len(), grads.len(), "one gradient per parameter");
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| Matrix::zeros(g.rows(), g.cols())).collect();
            self.v = self.m.clone();
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (k, (w, g)) in params.into_iter().zip(grads).enumerate() {
            assert_eq!(w.shape(), g.shape(), "gradient shape for parameter {k}");
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, (wi, &gi)) in w.data_mut().iter_mut().zip(g.data()).enumerate() {
                let gi = gi + self.weight_decay * *wi;
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                *wi -= self.learning_rate * (m[i] / c1) / ((v[i] / c2).sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut w = Matrix::row_vector(&[1.0, -2.0, 0.0]);
        let mut adam = Adam::new(0.1, 0.0);
        adam.step(vec![&mut w], &[Matrix::row_vector(&[3.0, -0.5, 0.0])]);
        assert!((w.get(0, 0) - 0.9).abs() < 1e-7);
        assert!((w.get(0, 1) + 1.9).abs() < 1e-7);
        assert_eq!(w.get(0, 2), 0.0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut w = Matrix::row_vector(&[5.0]);
        let mut adam = Adam::new(0.1, 0.0);
        for _ in 0..500 {
            let g = Matrix::row_vector(&[2.0 * (w.get(0, 0) - 1.5)]);
            adam.step(vec![&mut w], &[g]);
        }
        assert!((w.get(0, 0) - 1.5).abs() < 1e-3);
    }
}
