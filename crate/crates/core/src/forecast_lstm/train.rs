use serde::{Deserialize, Serialize};

use super::{LstmConfig, LstmError, LstmModel, Window};
use crate::scaling::MinMaxScaler;
use crate::tensor::{AdamState, Rng};

/// Mean squared error of one epoch, in scaled units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub train: f64,
    pub valid: Option<f64>,
}

pub type LossHistory = Vec<EpochLoss>;

fn scaled_pairs(windows: &[Window], scaler: &MinMaxScaler) -> Vec<(Vec<f64>, f64)> {
    windows
        .iter()
        .map(|w| {
            (
                w.inputs.iter().map(|&v| scaler.scale(v)).collect(),
                scaler.scale(w.target),
            )
        })
        .collect()
}

fn mse(model: &LstmModel, pairs: &[(Vec<f64>, f64)]) -> f64 {
    pairs
        .iter()
        .map(|(w, t)| (model.forward_scaled(w) - t).powi(2))
        .sum::<f64>()
        / pairs.len() as f64
}

/// Fits an LSTM with mini-batch Adam and backpropagation through time.
///
/// The scaler is fitted on the training windows (inputs and targets) only.
/// Shuffling and initialisation draw from `config.seed`, so two calls with
/// identical inputs return bit-identical models and histories.
pub fn train_lstm(
    train: &[Window],
    valid: &[Window],
    config: &LstmConfig,
) -> Result<(LstmModel, LossHistory), LstmError> {
    config.validate()?;
    if train.is_empty() {
        return Err(LstmError::NoTrainingData);
    }
    for w in train.iter().chain(valid) {
        if w.inputs.len() != config.window {
            return Err(LstmError::WindowLength {
                expected: config.window,
                got: w.inputs.len(),
            });
        }
    }
    let scaler = MinMaxScaler::fit(
        train
            .iter()
            .flat_map(|w| w.inputs.iter().chain(std::iter::once(&w.target))),
    )
    .ok_or(LstmError::NoTrainingData)?;

    let train_pairs = scaled_pairs(train, &scaler);
    let valid_pairs = scaled_pairs(valid, &scaler);

    let mut rng = Rng::new(config.seed);
    let mut model = LstmModel::new(config.clone(), scaler, &mut rng)?;
    let mut optim: Vec<AdamState> = model
        .parameters()
        .into_iter()
        .map(|p| AdamState::for_param(p, config.learning_rate))
        .collect();

    let mut order: Vec<usize> = (0..train_pairs.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    let mut grads = model.zero_gradients();
    for epoch in 1..=config.epochs {
        rng.shuffle(&mut order);
        for batch in order.chunks(config.batch_size) {
            grads.iter_mut().for_each(|g| g.values_mut().fill(0.0));
            let weight = 1.0 / batch.len() as f64;
            for &idx in batch {
                let (w, t) = &train_pairs[idx];
                model.accumulate_gradients(w, *t, weight, &mut grads);
            }
            for ((param, grad), state) in model.parameters_mut().into_iter().zip(&grads).zip(&mut optim) {
                state
                    .update(param, grad)
                    .expect("gradient shapes mirror parameter shapes");
            }
        }
        let train_loss = mse(&model, &train_pairs);
        let valid_loss = (!valid_pairs.is_empty()).then(|| mse(&model, &valid_pairs));
        let bad = std::iter::once(train_loss).chain(valid_loss).find(|l| !l.is_finite());
        if let Some(loss) = bad {
            return Err(LstmError::Divergence { epoch, loss });
        }
        log::debug!("lstm epoch {epoch}: train {train_loss:.6e} valid {:?}", valid_loss);
        history.push(EpochLoss {
            epoch,
            train: train_loss,
            valid: valid_loss,
        });
    }
    Ok((model, history))
}

#[cfg(test)]
mod tests {
    use super::super::{evaluate, make_windows, persistence_predictions, predict_all};
    use super::*;

    fn small_config(epochs: usize) -> LstmConfig {
        LstmConfig {
            window: 4,
            layers: 1,
            hidden_units: 8,
            learning_rate: 0.01,
            epochs,
            batch_size: 16,
            seed: 3,
        }
    }

    #[test]
    fn constant_series_is_learned() {
        let values = vec![42.0; 120];
        let windows = make_windows(&values, 4).unwrap();
        let (model, history) = train_lstm(&windows, &[], &small_config(50)).unwrap();
        let last = history.last().unwrap();
        assert!(last.train < 1e-6, "final loss {}", last.train);
        assert_eq!(model.predict(&[42.0; 4]).unwrap(), 42.0);
    }

    #[test]
    fn constant_series_loss_is_non_increasing() {
        let values = vec![7.5; 200];
        let windows = make_windows(&values, 4).unwrap();
        let (_, history) = train_lstm(&windows, &[], &small_config(40)).unwrap();
        for pair in history.windows(2) {
            assert!(
                pair[1].train <= pair[0].train,
                "epoch {} loss {} rose to {}",
                pair[1].epoch,
                pair[0].train,
                pair[1].train
            );
        }
    }

    #[test]
    fn training_is_deterministic() {
        let values: Vec<f64> = (0..150).map(|i| 10.0 + (i as f64 * 0.3).sin() * 5.0).collect();
        let windows = make_windows(&values, 4).unwrap();
        let (train, valid) = windows.split_at(110);
        let a = train_lstm(train, valid, &small_config(5)).unwrap();
        let b = train_lstm(train, valid, &small_config(5)).unwrap();
        assert_eq!(a.1, b.1);
        assert_eq!(a.0, b.0);
        assert_eq!(a.1.len(), 5);
        assert!(a.1.iter().all(|e| e.valid.is_some()));
    }

    #[test]
    fn noisy_sine_beats_persistence() {
        let mut rng = Rng::new(99);
        let values: Vec<f64> = (0..1000)
            .map(|i| {
                let clean = 100.0 + 50.0 * (2.0 * std::f64::consts::PI * i as f64 / 60.0).sin();
                (clean * (1.0 + 0.05 * rng.standard_normal())).max(0.0)
            })
            .collect();
        let windows = make_windows(&values, 10).unwrap();
        let n = windows.len();
        let (train, rest) = windows.split_at(n * 6 / 10);
        let (valid, test) = rest.split_at(n * 2 / 10);
        let cfg = LstmConfig {
            epochs: 20,
            hidden_units: 20,
            ..LstmConfig::default()
        };
        let (model, _) = train_lstm(train, valid, &cfg).unwrap();
        let truth: Vec<f64> = test.iter().map(|w| w.target).collect();
        let lstm = evaluate(&predict_all(&model, test).unwrap(), &truth).unwrap();
        let persist = evaluate(&persistence_predictions(test), &truth).unwrap();
        assert!(
            lstm.mse < persist.mse,
            "lstm {} vs persistence {}",
            lstm.mse,
            persist.mse
        );
    }

    #[test]
    fn empty_train_set_is_rejected() {
        assert_eq!(
            train_lstm(&[], &[], &small_config(1)).unwrap_err(),
            LstmError::NoTrainingData
        );
    }

    #[test]
    fn exploding_learning_rate_reports_divergence_or_finishes() {
        // Adam's normalised step keeps weights bounded, so even a huge rate
        // must not produce NaN silently.
        let values: Vec<f64> = (0..60).map(|i| i as f64).collect();
        let windows = make_windows(&values, 4).unwrap();
        let cfg = LstmConfig {
            learning_rate: 1e6,
            ..small_config(3)
        };
        match train_lstm(&windows, &[], &cfg) {
            Ok((_, h)) => assert!(h.iter().all(|e| e.train.is_finite())),
            Err(e) => assert!(matches!(e, LstmError::Divergence { .. })),
        }
    }
}
