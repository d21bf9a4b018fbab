//! Dense linear algebra, activations, Adam and a finite-difference gradient
//! oracle shared by both predictive models.

mod adam;
mod matrix;
mod rng;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use adam::{adam_step, AdamState, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPSILON};
pub use matrix::{mat_vec_t_acc, matmul, outer_acc, vec_mat_acc, Matrix};
pub use rng::Rng;

#[derive(Debug, Error, PartialEq)]
pub enum TensorError {
    #[error("dimension mismatch: {}x{} · {}x{}", left.0, left.1, right.0, right.1)]
    DimensionMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("shape mismatch: {}x{} vs {}x{}", left.0, left.1, right.0, right.1)]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{len} values cannot fill a {rows}x{cols} matrix")]
    BadLength { rows: usize, cols: usize, len: usize },
    #[error("non-finite value {0}")]
    NonFinite(f64),
    #[error("invalid hyperparameter: {0}")]
    InvalidHyperparameter(String),
    #[error("finite-difference step must be positive, got {0}")]
    BadStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Sigmoid,
    Relu,
    Linear,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Sigmoid => sigmoid(x),
            Activation::Relu => x.max(0.0),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the activation's output `y = f(x)`.
    /// For ReLU the derivative at 0 is taken as 0.
    #[inline]
    pub fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Sigmoid => y * (1.0 - y),
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Elementwise activation.
pub fn activation(m: &Matrix, kind: Activation) -> Matrix {
    m.map(|v| kind.apply(v))
}

/// Central-difference gradient of `f` at `param`.
pub fn finite_diff_gradient<F>(f: F, param: &Matrix, eps: f64) -> Result<Matrix, TensorError>
where
    F: Fn(&Matrix) -> f64,
{
    if eps.is_nan() || eps <= 0.0 {
        return Err(TensorError::BadStep(eps));
    }
    let mut probe = param.clone();
    let mut grad = Matrix::zeros(param.rows(), param.cols());
    for idx in 0..param.len() {
        let orig = probe.values()[idx];
        probe.values_mut()[idx] = orig + eps;
        let plus = f(&probe);
        probe.values_mut()[idx] = orig - eps;
        let minus = f(&probe);
        probe.values_mut()[idx] = orig;
        for v in [plus, minus] {
            if !v.is_finite() {
                return Err(TensorError::NonFinite(v));
            }
        }
        grad.values_mut()[idx] = (plus - minus) / (2.0 * eps);
    }
    Ok(grad)
}

/// Glorot-uniform draw in `±sqrt(6 / (rows + cols))`.
pub fn glorot_init(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    assert!(rows >= 1 && cols >= 1, "glorot_init needs a non-empty shape");
    let limit = (6.0 / (rows + cols) as f64).sqrt();
    let values = (0..rows * cols).map(|_| rng.uniform(-limit, limit)).collect();
    Matrix::from_vec(rows, cols, values).expect("length matches by construction")
}

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖)` over concatenated gradients,
/// falling back to the absolute difference when both are ~0.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        diff
    } else {
        diff / scale
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn activations_on_known_points() {
        let m = Matrix::from_rows(&[[-1.0, 2.0]]);
        assert_eq!(activation(&m, Activation::Relu), Matrix::from_rows(&[[0.0, 2.0]]));
        let z = Matrix::zeros(1, 1);
        assert_eq!(activation(&z, Activation::Tanh).get(0, 0), 0.0);
        assert_eq!(activation(&z, Activation::Sigmoid).get(0, 0), 0.5);
        assert_eq!(activation(&m, Activation::Linear), m);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        assert!(sigmoid(-800.0).is_finite());
        assert_eq!(sigmoid(800.0), 1.0);
    }

    #[test]
    fn derivatives_match_finite_differences() {
        for kind in [
            Activation::Tanh,
            Activation::Sigmoid,
            Activation::Relu,
            Activation::Linear,
        ] {
            for &x in &[-1.3, -0.2, 0.4, 2.1] {
                let h = 1e-6;
                let num = (kind.apply(x + h) - kind.apply(x - h)) / (2.0 * h);
                let ana = kind.derivative_from_output(kind.apply(x));
                assert!((num - ana).abs() < 1e-8, "{kind:?} at {x}");
            }
        }
    }

    #[test]
    fn finite_diff_square() {
        let f = |p: &Matrix| p.get(0, 0).powi(2);
        let g0 = finite_diff_gradient(f, &Matrix::zeros(1, 1), 1e-5).unwrap();
        assert!(g0.get(0, 0).abs() < 1e-12);
        let g3 = finite_diff_gradient(f, &Matrix::filled(1, 1, 3.0), 1e-5).unwrap();
        assert!((g3.get(0, 0) - 6.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_product() {
        let f = |p: &Matrix| p.get(0, 0) * p.get(0, 1);
        let g = finite_diff_gradient(f, &Matrix::row_vector(&[2.0, 5.0]), 1e-5).unwrap();
        assert!((g.get(0, 0) - 5.0).abs() < 1e-6);
        assert!((g.get(0, 1) - 2.0).abs() < 1e-6);
    }

    #[test]
    fn finite_diff_errors() {
        let p = Matrix::zeros(1, 1);
        assert!(matches!(
            finite_diff_gradient(|_| 0.0, &p, 0.0),
            Err(TensorError::BadStep(_))
        ));
        assert!(matches!(
            finite_diff_gradient(|_| f64::NAN, &p, 1e-5),
            Err(TensorError::NonFinite(_))
        ));
    }

    #[test]
    fn glorot_bounds_and_determinism() {
        let a = glorot_init(4, 7, &mut Rng::new(11));
        let b = glorot_init(4, 7, &mut Rng::new(11));
        assert_eq!(a, b);

        let one = glorot_init(1, 1, &mut Rng::new(5));
        assert!(one.get(0, 0).abs() <= 3f64.sqrt());

        let big = glorot_init(50, 50, &mut Rng::new(9));
        let limit = (6.0f64 / 100.0).sqrt();
        assert!(big.values().iter().all(|v| v.abs() <= limit));
    }
}
