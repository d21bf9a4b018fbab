use serde::{Deserialize, Serialize};

use super::{GcnConfig, GcnError, ServiceGraph};
use crate::scaling::MinMaxScaler;
use crate::tensor::{glorot_init, matmul, Activation, Matrix, Rng};

/// Graph convolutional regressor. Each layer computes
/// `H_{l+1} = σ_l(Â · H_l · W_l + b_l)`; hidden layers use ReLU and the last
/// layer is linear with a single output column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GcnModel {
    pub config: GcnConfig,
    pub weights: Vec<Matrix>,
    /// 1 × width row vectors, broadcast over nodes.
    pub biases: Vec<Matrix>,
    pub activations: Vec<Activation>,
    pub feature_scaler: MinMaxScaler,
    /// One per node, in graph order.
    pub target_scalers: Vec<MinMaxScaler>,
}

struct LayerCache {
    /// Â · H_l
    propagated: Matrix,
    /// σ(Â H_l W_l + b_l)
    output: Matrix,
}

impl GcnModel {
    pub fn new(
        config: GcnConfig,
        feature_scaler: MinMaxScaler,
        target_scalers: Vec<MinMaxScaler>,
        rng: &mut Rng,
    ) -> Result<Self, GcnError> {
        config.validate()?;
        let widths = config.layer_widths();
        let weights = widths.windows(2).map(|w| glorot_init(w[0], w[1], rng)).collect();
        let biases = widths[1..].iter().map(|&w| Matrix::zeros(1, w)).collect();
        Ok(Self {
            activations: default_activations(config.layers),
            config,
            weights,
            biases,
            feature_scaler,
            target_scalers,
        })
    }

    /// Model from explicit parameters; shapes are checked.
    pub fn from_parts(
        config: GcnConfig,
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
        activations: Vec<Activation>,
        feature_scaler: MinMaxScaler,
        target_scalers: Vec<MinMaxScaler>,
    ) -> Result<Self, GcnError> {
        let model = Self {
            config,
            weights,
            biases,
            activations,
            feature_scaler,
            target_scalers,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), GcnError> {
        self.config.validate()?;
        let widths = self.config.layer_widths();
        let l = self.config.layers;
        if self.weights.len() != l || self.biases.len() != l || self.activations.len() != l {
            return Err(GcnError::Corrupt(format!(
                "expected {l} layers of weights, biases and activations"
            )));
        }
        for i in 0..l {
            if self.weights[i].shape() != (widths[i], widths[i + 1]) || self.biases[i].shape() != (1, widths[i + 1]) {
                return Err(GcnError::Corrupt(format!("layer {i} has inconsistent shapes")));
            }
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.weights.len()
    }

    fn forward_cached(&self, graph: &ServiceGraph, x: &Matrix) -> Result<Vec<LayerCache>, GcnError> {
        let n = graph.len();
        if x.shape() != (n, self.config.input_features) {
            return Err(GcnError::FeatureShape {
                expected: (n, self.config.input_features),
                got: x.shape(),
            });
        }
        let a_hat = graph.normalized();
        let mut caches: Vec<LayerCache> = Vec::with_capacity(self.layers());
        for l in 0..self.layers() {
            let h = caches.last().map_or(x, |c| &c.output);
            let propagated = matmul(a_hat, h)?;
            let act = self.activations[l];
            let output = matmul(&propagated, &self.weights[l])?
                .add_row_broadcast(&self.biases[l])?
                .map(|v| act.apply(v));
            caches.push(LayerCache { propagated, output });
        }
        Ok(caches)
    }

    /// Raw network output `Z` (N × 1) on scaled features, before inverse
    /// scaling and clamping.
    pub fn forward(&self, graph: &ServiceGraph, x: &Matrix) -> Result<Matrix, GcnError> {
        let mut caches = self.forward_cached(graph, x)?;
        Ok(caches.pop().expect("at least one layer").output)
    }

    pub fn scale_features(&self, x: &Matrix) -> Matrix {
        x.map(|v| self.feature_scaler.scale(v))
    }

    /// Per-node vCPU prediction from a raw N × D feature matrix.
    pub fn predict(&self, graph: &ServiceGraph, x: &Matrix) -> Result<Vec<f64>, GcnError> {
        let z = self.forward(graph, &self.scale_features(x))?;
        self.check_scalers(graph)?;
        Ok(z.values()
            .iter()
            .zip(&self.target_scalers)
            .map(|(&v, s)| s.inverse(v).max(0.0))
            .collect())
    }

    pub fn check_scalers(&self, graph: &ServiceGraph) -> Result<(), GcnError> {
        if self.target_scalers.len() != graph.len() {
            return Err(GcnError::Corrupt(format!(
                "{} target scalers for {} nodes",
                self.target_scalers.len(),
                graph.len()
            )));
        }
        Ok(())
    }

    /// Targets in scaled units, node by node.
    pub fn scale_targets(&self, target: &[f64]) -> Vec<f64> {
        target
            .iter()
            .zip(&self.target_scalers)
            .map(|(&v, s)| s.scale(v))
            .collect()
    }

    pub fn parameters(&self) -> Vec<&Matrix> {
        self.weights.iter().chain(&self.biases).collect()
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        self.weights.iter_mut().chain(self.biases.iter_mut()).collect()
    }

    pub fn zero_gradients(&self) -> Vec<Matrix> {
        self.parameters()
            .into_iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    /// Squared error summed over nodes for one scaled sample, accumulating
    /// `weight · ∂/∂θ` into `grads` (weights first, then biases).
    pub fn accumulate_gradients(
        &self,
        graph: &ServiceGraph,
        x: &Matrix,
        target: &[f64],
        weight: f64,
        grads: &mut [Matrix],
    ) -> Result<f64, GcnError> {
        let caches = self.forward_cached(graph, x)?;
        let out = &caches.last().expect("at least one layer").output;
        if target.len() != out.rows() {
            return Err(GcnError::TargetLength {
                expected: out.rows(),
                got: target.len(),
            });
        }
        let mut loss = 0.0;
        let mut d_out = Matrix::zeros(out.rows(), 1);
        for (i, &t) in target.iter().enumerate() {
            let e = out.get(i, 0) - t;
            loss += e * e;
            d_out.set(i, 0, weight * 2.0 * e);
        }
        let a_hat = graph.normalized();
        let n_layers = self.layers();
        for l in (0..n_layers).rev() {
            let act = self.activations[l];
            let d_pre = d_out.zip_with(&caches[l].output, |d, y| d * act.derivative_from_output(y))?;
            let gw = matmul(&caches[l].propagated.transpose(), &d_pre)?;
            grads[l].add_scaled(&gw, 1.0)?;
            grads[n_layers + l].add_scaled(&d_pre.sum_rows(), 1.0)?;
            if l > 0 {
                // Â is symmetric, so Âᵀ = Â
                d_out = matmul(a_hat, &matmul(&d_pre, &self.weights[l].transpose())?)?;
            }
        }
        Ok(loss)
    }
}

pub fn default_activations(layers: usize) -> Vec<Activation> {
    (0..layers)
        .map(|l| {
            if l + 1 == layers {
                Activation::Linear
            } else {
                Activation::Relu
            }
        })
        .collect()
}
