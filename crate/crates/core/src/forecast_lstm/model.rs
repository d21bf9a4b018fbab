use serde::{Deserialize, Serialize};

use super::{LstmConfig, LstmError};
use crate::scaling::MinMaxScaler;
use crate::tensor::{glorot_init, mat_vec_t_acc, outer_acc, sigmoid, vec_mat_acc, Matrix, Rng};

/// Weights of one gate: input path, recurrent path and bias.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateParams {
    /// input-dim × hidden
    pub input_weights: Matrix,
    /// hidden × hidden
    pub recurrent_weights: Matrix,
    /// 1 × hidden
    pub bias: Matrix,
}

impl GateParams {
    fn zeros(input_dim: usize, hidden: usize) -> Self {
        Self {
            input_weights: Matrix::zeros(input_dim, hidden),
            recurrent_weights: Matrix::zeros(hidden, hidden),
            bias: Matrix::zeros(1, hidden),
        }
    }

    fn random(input_dim: usize, hidden: usize, bias: f64, rng: &mut Rng) -> Self {
        Self {
            input_weights: glorot_init(input_dim, hidden, rng),
            recurrent_weights: glorot_init(hidden, hidden, rng),
            bias: Matrix::filled(1, hidden, bias),
        }
    }

    /// Pre-activation `x·W + h·U + b` into `out`.
    #[inline]
    fn pre_activation(&self, x: &[f64], h: &[f64], out: &mut [f64]) {
        out.copy_from_slice(self.bias.values());
        vec_mat_acc(x, &self.input_weights, out);
        vec_mat_acc(h, &self.recurrent_weights, out);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmLayer {
    pub input_gate: GateParams,
    pub forget_gate: GateParams,
    pub candidate: GateParams,
    pub output_gate: GateParams,
}

impl LstmLayer {
    pub fn input_dim(&self) -> usize {
        self.input_gate.input_weights.rows()
    }

    pub fn hidden(&self) -> usize {
        self.input_gate.bias.cols()
    }

    fn gates(&self) -> [&GateParams; 4] {
        [&self.input_gate, &self.forget_gate, &self.candidate, &self.output_gate]
    }
}

/// Dense tanh head on the last hidden state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputHead {
    /// hidden × 1
    pub weights: Matrix,
    /// 1 × 1
    pub bias: Matrix,
}

/// Multi-layer LSTM regressor mapping a k-window to the next value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub scaler: MinMaxScaler,
    pub layers: Vec<LstmLayer>,
    pub head: OutputHead,
}

/// Per-step activations of one layer, kept for backpropagation.
struct StepCache {
    input: Vec<f64>,
    h_prev: Vec<f64>,
    c_prev: Vec<f64>,
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    tanh_c: Vec<f64>,
}

pub(crate) struct ForwardTrace {
    layers: Vec<Vec<StepCache>>,
    last_hidden: Vec<f64>,
    /// Output in scaled units.
    pub(crate) output: f64,
}

impl LstmModel {
    /// Glorot-initialised model; forget-gate biases start at 1.
    pub fn new(config: LstmConfig, scaler: MinMaxScaler, rng: &mut Rng) -> Result<Self, LstmError> {
        config.validate()?;
        let h = config.hidden_units;
        let layers = (0..config.layers)
            .map(|l| {
                let input_dim = if l == 0 { 1 } else { h };
                LstmLayer {
                    input_gate: GateParams::random(input_dim, h, 0.0, rng),
                    forget_gate: GateParams::random(input_dim, h, 1.0, rng),
                    candidate: GateParams::random(input_dim, h, 0.0, rng),
                    output_gate: GateParams::random(input_dim, h, 0.0, rng),
                }
            })
            .collect();
        let head = OutputHead {
            weights: glorot_init(h, 1, rng),
            bias: Matrix::zeros(1, 1),
        };
        Ok(Self {
            config,
            scaler,
            layers,
            head,
        })
    }

    /// All gate weights and biases zero; head weights zero and head bias `head_bias`.
    pub fn zeroed(config: LstmConfig, scaler: MinMaxScaler, head_bias: f64) -> Result<Self, LstmError> {
        config.validate()?;
        let h = config.hidden_units;
        let layers = (0..config.layers)
            .map(|l| {
                let input_dim = if l == 0 { 1 } else { h };
                LstmLayer {
                    input_gate: GateParams::zeros(input_dim, h),
                    forget_gate: GateParams::zeros(input_dim, h),
                    candidate: GateParams::zeros(input_dim, h),
                    output_gate: GateParams::zeros(input_dim, h),
                }
            })
            .collect();
        Ok(Self {
            config,
            scaler,
            layers,
            head: OutputHead {
                weights: Matrix::zeros(h, 1),
                bias: Matrix::filled(1, 1, head_bias),
            },
        })
    }

    pub fn window(&self) -> usize {
        self.config.window
    }

    /// Checks that stored shapes are consistent with the config (used after
    /// deserialisation).
    pub fn validate(&self) -> Result<(), LstmError> {
        self.config.validate()?;
        let h = self.config.hidden_units;
        if self.layers.len() != self.config.layers {
            return Err(LstmError::Corrupt(format!(
                "{} layers stored, config says {}",
                self.layers.len(),
                self.config.layers
            )));
        }
        for (l, layer) in self.layers.iter().enumerate() {
            let input_dim = if l == 0 { 1 } else { h };
            for gate in layer.gates() {
                if gate.input_weights.shape() != (input_dim, h)
                    || gate.recurrent_weights.shape() != (h, h)
                    || gate.bias.shape() != (1, h)
                {
                    return Err(LstmError::Corrupt(format!("bad gate shapes in layer {l}")));
                }
            }
        }
        if self.head.weights.shape() != (h, 1) || self.head.bias.shape() != (1, 1) {
            return Err(LstmError::Corrupt("bad output head shapes".into()));
        }
        Ok(())
    }

    /// Predicts the next value from a raw (unscaled) window.
    pub fn predict(&self, window: &[f64]) -> Result<f64, LstmError> {
        if window.len() != self.config.window {
            return Err(LstmError::WindowLength {
                expected: self.config.window,
                got: window.len(),
            });
        }
        let scaled: Vec<f64> = window.iter().map(|&v| self.scaler.scale(v)).collect();
        Ok(self.scaler.inverse(self.forward_scaled(&scaled)))
    }

    /// Forward pass on an already-scaled window; returns the scaled output.
    pub fn forward_scaled(&self, window: &[f64]) -> f64 {
        self.forward_trace(window, false).output
    }

    pub(crate) fn forward_trace(&self, window: &[f64], keep: bool) -> ForwardTrace {
        let h = self.config.hidden_units;
        let mut seq: Vec<Vec<f64>> = window.iter().map(|&v| vec![v]).collect();
        let mut caches = Vec::with_capacity(if keep { self.layers.len() } else { 0 });
        let mut pre = vec![0.0; h];
        for layer in &self.layers {
            let mut hs = vec![0.0; h];
            let mut cs = vec![0.0; h];
            let mut out_seq = Vec::with_capacity(seq.len());
            let mut layer_cache = Vec::with_capacity(if keep { seq.len() } else { 0 });
            for x in &seq {
                let mut gate_out = |gate: &GateParams, act: fn(f64) -> f64| {
                    gate.pre_activation(x, &hs, &mut pre);
                    pre.iter().map(|&v| act(v)).collect::<Vec<f64>>()
                };
                let i = gate_out(&layer.input_gate, sigmoid);
                let f = gate_out(&layer.forget_gate, sigmoid);
                let g = gate_out(&layer.candidate, f64::tanh);
                let o = gate_out(&layer.output_gate, sigmoid);
                let c_prev = cs.clone();
                for u in 0..h {
                    cs[u] = f[u] * cs[u] + i[u] * g[u];
                }
                let tanh_c: Vec<f64> = cs.iter().map(|c| c.tanh()).collect();
                let h_prev = std::mem::replace(&mut hs, o.iter().zip(&tanh_c).map(|(a, b)| a * b).collect());
                out_seq.push(hs.clone());
                if keep {
                    layer_cache.push(StepCache {
                        input: x.clone(),
                        h_prev,
                        c_prev,
                        i,
                        f,
                        g,
                        o,
                        tanh_c,
                    });
                }
            }
            if keep {
                caches.push(layer_cache);
            }
            seq = out_seq;
        }
        let last_hidden = seq.last().cloned().unwrap_or_else(|| vec![0.0; h]);
        let mut z = self.head.bias.get(0, 0);
        for (hv, w) in last_hidden.iter().zip(self.head.weights.values()) {
            z += hv * w;
        }
        ForwardTrace {
            layers: caches,
            last_hidden,
            output: z.tanh(),
        }
    }

    /// Parameters in a fixed order: per layer, per gate (input, forget,
    /// candidate, output) the input weights, recurrent weights and bias; then
    /// head weights and head bias.
    pub fn parameters(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        for layer in &self.layers {
            for gate in layer.gates() {
                out.push(&gate.input_weights);
                out.push(&gate.recurrent_weights);
                out.push(&gate.bias);
            }
        }
        out.push(&self.head.weights);
        out.push(&self.head.bias);
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            for gate in [
                &mut layer.input_gate,
                &mut layer.forget_gate,
                &mut layer.candidate,
                &mut layer.output_gate,
            ] {
                out.push(&mut gate.input_weights);
                out.push(&mut gate.recurrent_weights);
                out.push(&mut gate.bias);
            }
        }
        out.push(&mut self.head.weights);
        out.push(&mut self.head.bias);
        out
    }

    pub fn zero_gradients(&self) -> Vec<Matrix> {
        self.parameters()
            .into_iter()
            .map(|p| Matrix::zeros(p.rows(), p.cols()))
            .collect()
    }

    /// Squared error on one scaled sample; accumulates `weight · ∂loss/∂θ`
    /// into `grads` (same order as [`parameters`](Self::parameters)).
    pub fn accumulate_gradients(&self, window: &[f64], target: f64, weight: f64, grads: &mut [Matrix]) -> f64 {
        let trace = self.forward_trace(window, true);
        let y = trace.output;
        let err = y - target;
        let h = self.config.hidden_units;
        let n_layers = self.layers.len();
        let head_w = 12 * n_layers;

        // head: y = tanh(z), loss = err²
        let dz = weight * 2.0 * err * (1.0 - y * y);
        outer_acc(&trace.last_hidden, &[dz], &mut grads[head_w]);
        grads[head_w + 1].values_mut()[0] += dz;

        let steps = window.len();
        // gradient flowing into each layer's outputs h_t from above
        let mut d_above: Vec<Vec<f64>> = vec![vec![0.0; h]; steps];
        if steps > 0 {
            for (d, w) in d_above[steps - 1].iter_mut().zip(self.head.weights.values()) {
                *d = w * dz;
            }
        }

        let mut da = [vec![0.0; h], vec![0.0; h], vec![0.0; h], vec![0.0; h]];
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let cache = &trace.layers[l];
            let input_dim = layer.input_dim();
            let mut d_below: Vec<Vec<f64>> = vec![vec![0.0; input_dim]; steps];
            let mut dh_next = vec![0.0; h];
            let mut dc_next = vec![0.0; h];
            for t in (0..steps).rev() {
                let s = &cache[t];
                for u in 0..h {
                    let dh = d_above[t][u] + dh_next[u];
                    let d_o = dh * s.tanh_c[u];
                    let dc = dh * s.o[u] * (1.0 - s.tanh_c[u] * s.tanh_c[u]) + dc_next[u];
                    let di = dc * s.g[u];
                    let dg = dc * s.i[u];
                    let df = dc * s.c_prev[u];
                    dc_next[u] = dc * s.f[u];
                    da[0][u] = di * s.i[u] * (1.0 - s.i[u]);
                    da[1][u] = df * s.f[u] * (1.0 - s.f[u]);
                    da[2][u] = dg * (1.0 - s.g[u] * s.g[u]);
                    da[3][u] = d_o * s.o[u] * (1.0 - s.o[u]);
                }
                dh_next.iter_mut().for_each(|v| *v = 0.0);
                for (gi, gate) in layer.gates().into_iter().enumerate() {
                    let base = 12 * l + 3 * gi;
                    outer_acc(&s.input, &da[gi], &mut grads[base]);
                    outer_acc(&s.h_prev, &da[gi], &mut grads[base + 1]);
                    for (b, d) in grads[base + 2].values_mut().iter_mut().zip(&da[gi]) {
                        *b += d;
                    }
                    if l > 0 {
                        mat_vec_t_acc(&gate.input_weights, &da[gi], &mut d_below[t]);
                    }
                    mat_vec_t_acc(&gate.recurrent_weights, &da[gi], &mut dh_next);
                }
            }
            d_above = d_below;
        }
        err * err
    }
}
