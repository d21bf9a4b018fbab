use serde::{Deserialize, Serialize};

use super::{Matrix, TensorError};

pub const DEFAULT_BETA1: f64 = 0.9;
pub const DEFAULT_BETA2: f64 = 0.999;
pub const DEFAULT_EPSILON: f64 = 1e-8;

/// Per-parameter Adam moments and hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Matrix,
    pub second_moment: Matrix,
    pub step: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    /// Fresh state with zeroed moments and the default betas/epsilon.
    pub fn new(rows: usize, cols: usize, learning_rate: f64) -> Self {
        Self::with_hyperparameters(rows, cols, learning_rate, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON)
            .expect("default Adam hyperparameters are valid")
    }

    pub fn for_param(param: &Matrix, learning_rate: f64) -> Self {
        Self::new(param.rows(), param.cols(), learning_rate)
    }

    pub fn with_hyperparameters(
        rows: usize,
        cols: usize,
        learning_rate: f64,
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    ) -> Result<Self, TensorError> {
        let in_unit = |b: f64| b > 0.0 && b < 1.0;
        if !in_unit(beta1) || !in_unit(beta2) || epsilon <= 0.0 || !learning_rate.is_finite() {
            return Err(TensorError::InvalidHyperparameter(format!(
                "lr={learning_rate}, beta1={beta1}, beta2={beta2}, eps={epsilon}"
            )));
        }
        Ok(Self {
            first_moment: Matrix::zeros(rows, cols),
            second_moment: Matrix::zeros(rows, cols),
            step: 0,
            learning_rate,
            beta1,
            beta2,
            epsilon,
        })
    }

    /// Applies one bias-corrected Adam update to `param` in place.
    pub fn update(&mut self, param: &mut Matrix, grad: &Matrix) -> Result<(), TensorError> {
        for m in [&*param, &self.first_moment, &self.second_moment] {
            if m.shape() != grad.shape() {
                return Err(TensorError::ShapeMismatch {
                    left: m.shape(),
                    right: grad.shape(),
                });
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2, lr, eps) = (self.beta1, self.beta2, self.learning_rate, self.epsilon);
        let m = self.first_moment.values_mut();
        let v = self.second_moment.values_mut();
        for (((p, &g), mi), vi) in param
            .values_mut()
            .iter_mut()
            .zip(grad.values())
            .zip(m.iter_mut())
            .zip(v.iter_mut())
        {
            *mi = b1 * *mi + (1.0 - b1) * g;
            *vi = b2 * *vi + (1.0 - b2) * g * g;
            let m_hat = *mi / bc1;
            let v_hat = *vi / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// Pure form of [`AdamState::update`]: returns the updated parameter and state.
pub fn adam_step(param: &Matrix, grad: &Matrix, state: &AdamState) -> Result<(Matrix, AdamState), TensorError> {
    let mut p = param.clone();
    let mut s = state.clone();
    s.update(&mut p, grad)?;
    Ok((p, s))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_param() {
        let p = Matrix::from_rows(&[[1.0, -2.0]]);
        let s = AdamState::for_param(&p, 0.01);
        let (p2, s2) = adam_step(&p, &Matrix::zeros(1, 2), &s).unwrap();
        assert_eq!(p2, p);
        assert_eq!(s2.step, 1);
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so the first update is lr·g/(|g|+ε)
        let p = Matrix::filled(1, 1, 1.0);
        let s = AdamState::for_param(&p, 0.01);
        let (p2, _) = adam_step(&p, &Matrix::filled(1, 1, 1.0), &s).unwrap();
        let expect = 1.0 - 0.01 * 1.0 / (1.0 + 1e-8);
        assert!((p2.get(0, 0) - expect).abs() < 1e-15);
        assert!((p2.get(0, 0) - 0.99).abs() < 1e-9);
    }

    #[test]
    fn two_steps_match_scalar_reference() {
        // scalar Adam written out longhand
        let (lr, b1, b2, eps) = (0.01f64, 0.9f64, 0.999f64, 1e-8f64);
        let mut p_ref = 1.0f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        for t in 1..=2 {
            let g = 1.0;
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let mh = m / (1.0 - b1.powi(t));
            let vh = v / (1.0 - b2.powi(t));
            p_ref -= lr * mh / (vh.sqrt() + eps);
        }

        let mut p = Matrix::filled(1, 1, 1.0);
        let mut s = AdamState::for_param(&p, lr);
        let g = Matrix::filled(1, 1, 1.0);
        s.update(&mut p, &g).unwrap();
        s.update(&mut p, &g).unwrap();
        assert_eq!(s.step, 2);
        assert!((p.get(0, 0) - p_ref).abs() < 1e-15);
        assert!((p.get(0, 0) - 0.98).abs() < 1e-8);
    }

    #[test]
    fn shape_mismatch_is_error() {
        let p = Matrix::zeros(2, 2);
        let s = AdamState::for_param(&p, 0.01);
        assert!(matches!(
            adam_step(&p, &Matrix::zeros(1, 2), &s),
            Err(TensorError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn rejects_bad_betas() {
        assert!(AdamState::with_hyperparameters(1, 1, 0.01, 1.0, 0.999, 1e-8).is_err());
        assert!(AdamState::with_hyperparameters(1, 1, 0.01, 0.9, 0.999, 0.0).is_err());
    }
}
