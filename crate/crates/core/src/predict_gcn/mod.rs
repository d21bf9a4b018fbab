//! Graph convolutional resource predictor: maps every service's workload
//! window (with the forecast appended) to its peak vCPU demand over the
//! coming window, mixing information along the dependency graph.

mod dataset;
mod graph;
mod model;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use dataset::{build_resource_dataset, ResourceSample};
pub use graph::{normalize_adjacency, GraphFile, ServiceGraph, DETAILS, PRODUCTPAGE, RATINGS, REVIEWS};
pub use model::{default_activations, GcnModel};

use crate::forecast_lstm::EpochLoss;
use crate::scaling::MinMaxScaler;
use crate::tensor::{AdamState, Matrix, Rng, TensorError};

#[derive(Debug, Error, PartialEq)]
pub enum GcnError {
    #[error("adjacency must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("adjacency is not symmetric at ({row}, {col})")]
    Asymmetric { row: usize, col: usize },
    #[error("adjacency entry ({row}, {col}) = {value} is not 0 or 1")]
    NotBinary { row: usize, col: usize, value: f64 },
    #[error("node {0} has a self loop in the stored adjacency")]
    SelfLoop(usize),
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("unknown node '{0}'")]
    UnknownNode(String),
    #[error("duplicate node '{0}'")]
    DuplicateNode(String),
    #[error("feature matrix is {}x{}, expected {}x{}", got.0, got.1, expected.0, expected.1)]
    FeatureShape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("target has {got} entries, expected {expected}")]
    TargetLength { expected: usize, got: usize },
    #[error("misaligned series: {0}")]
    Misaligned(String),
    #[error("invalid GCN config: {0}")]
    InvalidConfig(String),
    #[error("no training samples")]
    NoTrainingData,
    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },
    #[error("corrupt model: {0}")]
    Corrupt(String),
    #[error("graph file: {0}")]
    Io(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GcnConfig {
    /// Number of graph convolution layers `L`.
    pub layers: usize,
    /// Features per node `D`; equals the workload window `k`.
    pub input_features: usize,
    /// Widths of the `L − 1` hidden layers.
    pub hidden_widths: Vec<usize>,
    /// Output features per node; always 1.
    pub output_features: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GcnConfig {
    /// Two layers (hidden width 32), Adam lr 0.001, 100 epochs, batch 256.
    fn default() -> Self {
        Self {
            layers: 2,
            input_features: 10,
            hidden_widths: vec![32],
            output_features: 1,
            learning_rate: 0.001,
            epochs: 100,
            batch_size: 256,
            seed: 0,
        }
    }
}

impl GcnConfig {
    pub fn validate(&self) -> Result<(), GcnError> {
        let fail = |m: &str| Err(GcnError::InvalidConfig(m.to_string()));
        if self.layers < 1 {
            return fail("layers must be >= 1");
        }
        if self.input_features < 1 {
            return fail("input_features must be >= 1");
        }
        if self.output_features != 1 {
            return fail("output_features must be 1");
        }
        if self.hidden_widths.len() + 1 != self.layers {
            return fail("hidden_widths must list layers - 1 widths");
        }
        if self.hidden_widths.contains(&0) {
            return fail("hidden widths must be >= 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return fail("learning_rate must be positive");
        }
        if self.epochs < 1 || self.batch_size < 1 {
            return fail("epochs and batch_size must be >= 1");
        }
        Ok(())
    }

    /// `[D, hidden..., 1]`
    pub fn layer_widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_features];
        w.extend(&self.hidden_widths);
        w.push(self.output_features);
        w
    }
}

/// Network output on scaled features (see [`GcnModel::forward`]).
pub fn gcn_forward(model: &GcnModel, graph: &ServiceGraph, x: &Matrix) -> Result<Matrix, GcnError> {
    model.forward(graph, x)
}

/// Non-negative per-node vCPU prediction from raw features.
pub fn predict_resource(
    model: &GcnModel,
    graph: &ServiceGraph,
    window_with_forecast: &Matrix,
) -> Result<Vec<f64>, GcnError> {
    model.predict(graph, window_with_forecast)
}

struct Scaled {
    x: Matrix,
    y: Vec<f64>,
}

fn scale_samples(samples: &[ResourceSample], model: &GcnModel) -> Vec<Scaled> {
    samples
        .iter()
        .map(|s| Scaled {
            x: model.scale_features(&s.features),
            y: model.scale_targets(&s.target),
        })
        .collect()
}

fn mse(model: &GcnModel, graph: &ServiceGraph, data: &[Scaled]) -> Result<f64, GcnError> {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in data {
        let z = model.forward(graph, &s.x)?;
        for (p, t) in z.values().iter().zip(&s.y) {
            total += (p - t).powi(2);
        }
        count += s.y.len();
    }
    Ok(total / count as f64)
}

/// Fits a GCN with mini-batch Adam on MSE over all nodes and samples.
///
/// Feature and target scalers are fitted on `train` only, each shared across
/// nodes. Losses in the history are in scaled units.
pub fn train_gcn(
    train: &[ResourceSample],
    valid: &[ResourceSample],
    graph: &ServiceGraph,
    config: &GcnConfig,
) -> Result<(GcnModel, Vec<EpochLoss>), GcnError> {
    config.validate()?;
    if train.is_empty() {
        return Err(GcnError::NoTrainingData);
    }
    for s in train.iter().chain(valid) {
        if s.features.shape() != (graph.len(), config.input_features) {
            return Err(GcnError::FeatureShape {
                expected: (graph.len(), config.input_features),
                got: s.features.shape(),
            });
        }
        if s.target.len() != graph.len() {
            return Err(GcnError::TargetLength {
                expected: graph.len(),
                got: s.target.len(),
            });
        }
    }
    let feature_scaler =
        MinMaxScaler::fit(train.iter().flat_map(|s| s.features.values())).ok_or(GcnError::NoTrainingData)?;
    let target_scalers = (0..graph.len())
        .map(|i| MinMaxScaler::fit(train.iter().map(|s| &s.target[i])).ok_or(GcnError::NoTrainingData))
        .collect::<Result<Vec<_>, _>>()?;

    let mut rng = Rng::new(config.seed);
    let mut model = GcnModel::new(config.clone(), feature_scaler, target_scalers, &mut rng)?;
    let train_data = scale_samples(train, &model);
    let valid_data = scale_samples(valid, &model);

    let mut optim: Vec<AdamState> = model
        .parameters()
        .into_iter()
        .map(|p| AdamState::for_param(p, config.learning_rate))
        .collect();
    let mut grads = model.zero_gradients();
    let mut order: Vec<usize> = (0..train_data.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.values_mut().fill(0.0));
            let weight = 1.0 / (batch.len() * graph.len()) as f64;
            for &idx in batch {
                let s = &train_data[idx];
                model.accumulate_gradients(graph, &s.x, &s.y, weight, &mut grads)?;
            }
            for ((param, grad), state) in model.parameters_mut().into_iter().zip(&grads).zip(&mut optim) {
                state.update(param, grad)?;
            }
        }
        let train_loss = mse(&model, graph, &train_data)?;
        let valid_loss = if valid_data.is_empty() {
            None
        } else {
            Some(mse(&model, graph, &valid_data)?)
        };
        if let Some(loss) = std::iter::once(train_loss).chain(valid_loss).find(|l| !l.is_finite()) {
            return Err(GcnError::Divergence { epoch, loss });
        }
        log::debug!("gcn epoch {epoch}: train {train_loss:.6e} valid {valid_loss:?}");
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            valid: valid_loss,
        });
    }
    Ok((model, history))
}

/// Per-node MSE of `predict_resource` against sample targets, in vCPU².
pub fn per_node_mse(model: &GcnModel, graph: &ServiceGraph, samples: &[ResourceSample]) -> Result<Vec<f64>, GcnError> {
    let mut acc = vec![0.0; graph.len()];
    for s in samples {
        let p = model.predict(graph, &s.features)?;
        for (a, (p, t)) in acc.iter_mut().zip(p.iter().zip(&s.target)) {
            *a += (p - t).powi(2);
        }
    }
    let n = samples.len().max(1) as f64;
    Ok(acc.into_iter().map(|v| v / n).collect())
}
