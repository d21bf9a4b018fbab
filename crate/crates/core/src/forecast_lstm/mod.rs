//! Sliding-window LSTM forecaster of next-minute workload, one model per
//! microservice.

mod model;
mod train;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use model::{GateParams, LstmLayer, LstmModel, OutputHead};
pub use train::{train_lstm, EpochLoss, LossHistory};

#[derive(Debug, Error, PartialEq)]
pub enum LstmError {
    #[error("series of length {len} is too short for window {window}")]
    EmptyDataset { len: usize, window: usize },
    #[error("window has {got} values, model expects {expected}")]
    WindowLength { expected: usize, got: usize },
    #[error("invalid LSTM config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("no training samples")]
    NoTrainingData,
    #[error("predictions and truth differ in length ({predictions} vs {truth})")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("cannot evaluate an empty prediction set")]
    EmptyEvaluation,
    #[error("invalid workload series: {0}")]
    InvalidSeries(String),
    #[error("corrupt model: {0}")]
    Corrupt(String),
}

/// Per-minute request rate of one microservice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadSeries {
    pub service: String,
    pub start_minute: u64,
    pub values: Vec<f64>,
}

impl WorkloadSeries {
    pub fn new(service: impl Into<String>, start_minute: u64, values: Vec<f64>) -> Result<Self, LstmError> {
        if let Some(v) = values.iter().find(|v| !v.is_finite() || **v < 0.0) {
            return Err(LstmError::InvalidSeries(format!("value {v} is negative or non-finite")));
        }
        Ok(Self {
            service: service.into(),
            start_minute,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub window: usize,
    pub layers: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for LstmConfig {
    /// k = 10, one layer of 50 units, Adam lr 0.01, 50 epochs, batch 64.
    fn default() -> Self {
        Self {
            window: 10,
            layers: 1,
            hidden_units: 50,
            learning_rate: 0.01,
            epochs: 50,
            batch_size: 64,
            seed: 0,
        }
    }
}

impl LstmConfig {
    pub fn validate(&self) -> Result<(), LstmError> {
        let checks = [
            (self.window >= 1, "window must be >= 1"),
            (self.layers >= 1, "layers must be >= 1"),
            (self.hidden_units >= 1, "hidden_units must be >= 1"),
            (self.epochs >= 1, "epochs must be >= 1"),
            (self.batch_size >= 1, "batch_size must be >= 1"),
            (
                self.learning_rate.is_finite() && self.learning_rate > 0.0,
                "learning_rate must be positive",
            ),
        ];
        match checks.iter().find(|(ok, _)| !ok) {
            Some((_, msg)) => Err(LstmError::InvalidConfig((*msg).to_string())),
            None => Ok(()),
        }
    }
}

/// One training pair: `k` consecutive values and the value that follows.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub inputs: Vec<f64>,
    pub target: f64,
}

/// All `T − k` (window, next value) pairs of a series, in order.
pub fn make_windows(values: &[f64], k: usize) -> Result<Vec<Window>, LstmError> {
    if k == 0 || values.len() < k + 1 {
        return Err(LstmError::EmptyDataset {
            len: values.len(),
            window: k,
        });
    }
    Ok(values
        .windows(k + 1)
        .map(|w| Window {
            inputs: w[..k].to_vec(),
            target: w[k],
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub mse: f64,
    pub mae: f64,
}

pub fn evaluate(predictions: &[f64], truth: &[f64]) -> Result<ErrorMetrics, LstmError> {
    if predictions.len() != truth.len() {
        return Err(LstmError::LengthMismatch {
            predictions: predictions.len(),
            truth: truth.len(),
        });
    }
    if predictions.is_empty() {
        return Err(LstmError::EmptyEvaluation);
    }
    let n = predictions.len() as f64;
    let (se, ae) = predictions.iter().zip(truth).fold((0.0, 0.0), |(se, ae), (p, t)| {
        let d = p - t;
        (se + d * d, ae + d.abs())
    });
    Ok(ErrorMetrics {
        mse: se / n,
        mae: ae / n,
    })
}

/// Predicts every window's target as its last observed value.
pub fn persistence_predictions(windows: &[Window]) -> Vec<f64> {
    windows
        .iter()
        .map(|w| *w.inputs.last().expect("windows are non-empty"))
        .collect()
}

pub fn predict_all(model: &LstmModel, windows: &[Window]) -> Result<Vec<f64>, LstmError> {
    windows.iter().map(|w| model.predict(&w.inputs)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scaling::MinMaxScaler;
    use crate::tensor::{finite_diff_gradient, relative_error, Rng};
    use proptest::prelude::*;

    #[test]
    fn windows_enumerate_index_range() {
        let w = make_windows(&[1.0, 2.0, 3.0, 4.0, 5.0], 2).unwrap();
        let pairs: Vec<_> = w.iter().map(|w| (w.inputs.clone(), w.target)).collect();
        assert_eq!(
            pairs,
            vec![(vec![1.0, 2.0], 3.0), (vec![2.0, 3.0], 4.0), (vec![3.0, 4.0], 5.0)]
        );
    }

    #[test]
    fn window_equal_to_length_is_empty_dataset() {
        assert!(matches!(
            make_windows(&[1.0; 5], 5),
            Err(LstmError::EmptyDataset { len: 5, window: 5 })
        ));
    }

    #[test]
    fn default_window_on_800_points() {
        let v: Vec<f64> = (0..800).map(|i| i as f64).collect();
        assert_eq!(make_windows(&v, 10).unwrap().len(), 790);
    }

    proptest! {
        #[test]
        fn window_count_is_t_minus_k(t in 2usize..300, k_frac in 0.0f64..1.0) {
            let k = 1 + ((t - 2) as f64 * k_frac) as usize;
            prop_assume!(k < t);
            let v = vec![1.0; t];
            prop_assert_eq!(make_windows(&v, k).unwrap().len(), t - k);
        }
    }

    #[test]
    fn evaluate_definitions() {
        assert_eq!(
            evaluate(&[1.0, 2.0], &[1.0, 2.0]).unwrap(),
            ErrorMetrics { mse: 0.0, mae: 0.0 }
        );
        assert_eq!(
            evaluate(&[1.0, 2.0], &[2.0, 4.0]).unwrap(),
            ErrorMetrics { mse: 2.5, mae: 1.5 }
        );
        assert_eq!(evaluate(&[0.0], &[3.0]).unwrap(), ErrorMetrics { mse: 9.0, mae: 3.0 });
        assert!(matches!(
            evaluate(&[1.0], &[1.0, 2.0]),
            Err(LstmError::LengthMismatch { .. })
        ));
        assert_eq!(evaluate(&[], &[]), Err(LstmError::EmptyEvaluation));
    }

    #[test]
    fn zero_weights_emit_tanh_of_head_bias() {
        let cfg = LstmConfig {
            window: 4,
            hidden_units: 3,
            ..LstmConfig::default()
        };
        let scaler = MinMaxScaler { min: 10.0, max: 50.0 };
        let model = LstmModel::zeroed(cfg, scaler, 0.3).unwrap();
        let y = model.predict(&[12.0, 40.0, 7.0, 33.0]).unwrap();
        assert!((y - scaler.inverse(0.3f64.tanh())).abs() < 1e-12);
    }

    #[test]
    fn default_shapes() {
        let cfg = LstmConfig::default();
        let model = LstmModel::new(cfg, MinMaxScaler { min: 0.0, max: 1.0 }, &mut Rng::new(1)).unwrap();
        assert_eq!(model.layers.len(), 1);
        assert_eq!(model.layers[0].hidden(), 50);
        assert_eq!(model.window(), 10);
        let y = model.predict(&[0.5; 10]).unwrap();
        assert!(y.is_finite());
        assert!(matches!(
            model.predict(&[0.5; 9]),
            Err(LstmError::WindowLength { expected: 10, got: 9 })
        ));
    }

    /// Straight-line LSTM recurrence with explicit per-gate loops, used as an
    /// independent check of the forward pass.
    fn reference_forward(model: &LstmModel, window: &[f64]) -> f64 {
        let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
        let mut seq: Vec<Vec<f64>> = window.iter().map(|v| vec![model.scaler.scale(*v)]).collect();
        for layer in &model.layers {
            let h_n = layer.hidden();
            let mut h = vec![0.0; h_n];
            let mut c = vec![0.0; h_n];
            let mut outs = Vec::new();
            for x in &seq {
                let gate = |g: &GateParams, u: usize, h: &[f64]| {
                    let mut s = g.bias.get(0, u);
                    for (r, xv) in x.iter().enumerate() {
                        s += xv * g.input_weights.get(r, u);
                    }
                    for (r, hv) in h.iter().enumerate() {
                        s += hv * g.recurrent_weights.get(r, u);
                    }
                    s
                };
                let mut h_new = vec![0.0; h_n];
                for u in 0..h_n {
                    let i = sig(gate(&layer.input_gate, u, &h));
                    let f = sig(gate(&layer.forget_gate, u, &h));
                    let g = gate(&layer.candidate, u, &h).tanh();
                    let o = sig(gate(&layer.output_gate, u, &h));
                    c[u] = f * c[u] + i * g;
                    h_new[u] = o * c[u].tanh();
                }
                h = h_new;
                outs.push(h.clone());
            }
            seq = outs;
        }
        let last = seq.last().unwrap();
        let mut z = model.head.bias.get(0, 0);
        for (u, hv) in last.iter().enumerate() {
            z += hv * model.head.weights.get(u, 0);
        }
        model.scaler.inverse(z.tanh())
    }

    #[test]
    fn forward_matches_reference_recurrence() {
        let mut rng = Rng::new(2024);
        for (layers, hidden) in [(1, 3), (2, 5), (3, 4)] {
            let cfg = LstmConfig {
                window: 6,
                layers,
                hidden_units: hidden,
                ..LstmConfig::default()
            };
            let model = LstmModel::new(cfg, MinMaxScaler { min: 0.0, max: 100.0 }, &mut rng).unwrap();
            let window: Vec<f64> = (0..6).map(|_| rng.uniform(0.0, 100.0)).collect();
            let got = model.predict(&window).unwrap();
            let want = reference_forward(&model, &window);
            assert!((got - want).abs() < 1e-10, "{got} vs {want}");
        }
    }

    fn sample_loss(model: &LstmModel, batch: &[(Vec<f64>, f64)]) -> f64 {
        batch
            .iter()
            .map(|(w, t)| (model.forward_scaled(w) - t).powi(2))
            .sum::<f64>()
            / batch.len() as f64
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = Rng::new(77);
        for layers in [1, 2] {
            let cfg = LstmConfig {
                window: 4,
                layers,
                hidden_units: 3,
                ..LstmConfig::default()
            };
            let model = LstmModel::new(cfg, MinMaxScaler { min: -1.0, max: 1.0 }, &mut rng).unwrap();
            let batch: Vec<(Vec<f64>, f64)> = (0..3)
                .map(|_| ((0..4).map(|_| rng.uniform(-0.8, 0.8)).collect(), rng.uniform(-0.8, 0.8)))
                .collect();
            let mut grads = model.zero_gradients();
            for (w, t) in &batch {
                model.accumulate_gradients(w, *t, 1.0 / batch.len() as f64, &mut grads);
            }
            let n_params = model.parameters().len();
            for idx in 0..n_params {
                let numeric = finite_diff_gradient(
                    |p| {
                        let mut m = model.clone();
                        *m.parameters_mut()[idx] = p.clone();
                        sample_loss(&m, &batch)
                    },
                    model.parameters()[idx],
                    1e-5,
                )
                .unwrap();
                let err = relative_error(grads[idx].values(), numeric.values());
                assert!(err < 1e-4, "layers={layers} param {idx}: rel err {err}");
            }
        }
    }
}
