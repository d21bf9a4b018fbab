use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};

use super::{read_json, write_file, write_json, Experiment, ReportError};
use crate::autoscaler::PolicyModels;
use crate::cluster_sim::{run_simulation, Policy, SimSettings, SimulationSummary};
use crate::forecast_lstm::{
    evaluate, make_windows, persistence_predictions, predict_all, train_lstm, ErrorMetrics, LstmConfig, LstmModel,
    Window,
};
use crate::predict_gcn::{build_resource_dataset, per_node_mse, train_gcn, GcnConfig, GcnModel, ResourceSample};
use crate::traces::{generate_synthetic_trace, split_dataset, Split, SyntheticSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub train: ErrorMetrics,
    pub valid: ErrorMetrics,
    pub test: ErrorMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceForecastMetrics {
    pub service: String,
    /// Error of the trained forecaster in requests per second.
    pub lstm: SplitMetrics,
    /// Last-value forecast on the test split.
    pub persistence_test: ErrorMetrics,
    pub final_train_loss: f64,
    pub final_valid_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadMetrics {
    pub trace_digest: String,
    pub seed: u64,
    pub window: usize,
    pub split_sizes: [usize; 3],
    pub services: Vec<ServiceForecastMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeError {
    pub service: String,
    pub mse: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceMetrics {
    pub trace_digest: String,
    pub seed: u64,
    pub split_sizes: [usize; 3],
    /// Error in vCPU over all nodes of every sample.
    pub gcn: SplitMetrics,
    /// Variance of the training targets over all nodes.
    pub train_target_variance: f64,
    pub per_node_test_mse: Vec<NodeError>,
    pub final_train_loss: f64,
    pub final_valid_loss: Option<f64>,
}

/// Summary of one simulation run, written next to its log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub policy: String,
    pub trace_digest: String,
    pub horizon: usize,
    pub seed: u64,
    pub startup_delay: u32,
    pub capacity: u32,
    pub capacity_limited_minutes: usize,
    pub metrics: SimulationSummary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyChoice {
    /// One run per threshold; every configured threshold when `None`.
    Reactive {
        threshold: Option<f64>,
    },
    GraphPhpa,
}

fn lstm_path(models: &Path, service: &str) -> PathBuf {
    models.join(format!("lstm_{service}.json"))
}

fn gcn_path(models: &Path) -> PathBuf {
    models.join("gcn.json")
}

fn split3<T>(items: &[T]) -> Result<Split<'_, T>, ReportError> {
    Ok(split_dataset(items)?)
}

fn windows_of(exp: &Experiment, k: usize) -> Result<Vec<Vec<Window>>, ReportError> {
    exp.telemetry.rps.iter().map(|r| Ok(make_windows(r, k)?)).collect()
}

fn forecast_metrics(model: &LstmModel, windows: &[Window]) -> Result<ErrorMetrics, ReportError> {
    let truth: Vec<f64> = windows.iter().map(|w| w.target).collect();
    Ok(evaluate(&predict_all(model, windows)?, &truth)?)
}

/// Trains one forecaster per service, in parallel, on the chronological
/// 60/20/20 split of that service's windows.
pub fn train_workload(exp: &Experiment) -> Result<WorkloadMetrics, ReportError> {
    let config = &exp.config;
    let k = config.lstm.window;
    let windows = windows_of(exp, k)?;
    let splits = windows.iter().map(|w| split3(w)).collect::<Result<Vec<_>, _>>()?;
    let configs: Vec<LstmConfig> = (0..splits.len())
        .map(|i| LstmConfig {
            seed: config.lstm_seed(i),
            ..config.lstm.clone()
        })
        .collect();
    let trained = std::thread::scope(|scope| {
        let handles: Vec<_> = splits
            .iter()
            .zip(&configs)
            .map(|(&(train, valid, _), cfg)| scope.spawn(move || train_lstm(train, valid, cfg)))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("forecaster training thread panicked"))
            .collect::<Vec<_>>()
    });

    let models_dir = config.models_dir();
    let mut services = Vec::new();
    for ((name, result), &(train, valid, test)) in exp.services().iter().zip(trained).zip(&splits) {
        let (model, history) = result?;
        let last = history.last().expect("at least one epoch");
        info!("{name}: final train loss {:.6}", last.train);
        write_json(&lstm_path(&models_dir, name), &model)?;
        let truth: Vec<f64> = test.iter().map(|w| w.target).collect();
        services.push(ServiceForecastMetrics {
            service: name.clone(),
            lstm: SplitMetrics {
                train: forecast_metrics(&model, train)?,
                valid: forecast_metrics(&model, valid)?,
                test: forecast_metrics(&model, test)?,
            },
            persistence_test: evaluate(&persistence_predictions(test), &truth)?,
            final_train_loss: last.train,
            final_valid_loss: last.valid,
        });
    }
    let (a, b, c) = splits[0];
    let metrics = WorkloadMetrics {
        trace_digest: exp.trace_digest.clone(),
        seed: config.seed,
        window: k,
        split_sizes: [a.len(), b.len(), c.len()],
        services,
    };
    write_json(&config.out_dir.join("workload_metrics.json"), &metrics)?;
    Ok(metrics)
}

fn load_forecasters(exp: &Experiment) -> Result<Vec<LstmModel>, ReportError> {
    let dir = exp.config.models_dir();
    exp.services()
        .iter()
        .map(|s| {
            let model: LstmModel = read_json(&lstm_path(&dir, s), "run `phpa train-workload` first")?;
            model.validate()?;
            Ok(model)
        })
        .collect()
}

fn gcn_metrics(model: &GcnModel, exp: &Experiment, samples: &[ResourceSample]) -> Result<ErrorMetrics, ReportError> {
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for s in samples {
        pred.extend(model.predict(&exp.graph, &s.features)?);
        truth.extend_from_slice(&s.target);
    }
    Ok(evaluate(&pred, &truth)?)
}

/// Builds the graph dataset from forecasts of the trained forecasters and
/// fits the resource model on its chronological training split.
pub fn train_resource(exp: &Experiment) -> Result<ResourceMetrics, ReportError> {
    let config = &exp.config;
    let forecasters = load_forecasters(exp)?;
    let k = forecasters[0].window();
    let windows = windows_of(exp, k)?;
    let forecasts = forecasters
        .iter()
        .zip(&windows)
        .map(|(m, w)| Ok(predict_all(m, w)?))
        .collect::<Result<Vec<_>, ReportError>>()?;
    let samples = build_resource_dataset(&exp.workload_series()?, &exp.telemetry.usage, &forecasts, k)?;
    let (train, valid, test) = split3(&samples)?;
    let gcn_config = GcnConfig {
        input_features: k,
        seed: config.gcn_seed(),
        ..config.gcn.clone()
    };
    let (model, history) = train_gcn(train, valid, &exp.graph, &gcn_config)?;
    let last = history.last().expect("at least one epoch");
    write_json(&gcn_path(&config.models_dir()), &model)?;

    let targets: Vec<f64> = train.iter().flat_map(|s| s.target.iter().copied()).collect();
    let mean = targets.iter().sum::<f64>() / targets.len() as f64;
    let variance = targets.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / targets.len() as f64;
    let per_node = per_node_mse(&model, &exp.graph, test)?;
    let metrics = ResourceMetrics {
        trace_digest: exp.trace_digest.clone(),
        seed: config.seed,
        split_sizes: [train.len(), valid.len(), test.len()],
        gcn: SplitMetrics {
            train: gcn_metrics(&model, exp, train)?,
            valid: gcn_metrics(&model, exp, valid)?,
            test: gcn_metrics(&model, exp, test)?,
        },
        train_target_variance: variance,
        per_node_test_mse: exp
            .services()
            .iter()
            .zip(per_node)
            .map(|(s, mse)| NodeError {
                service: s.clone(),
                mse,
            })
            .collect(),
        final_train_loss: last.train,
        final_valid_loss: last.valid,
    };
    write_json(&config.out_dir.join("resource_metrics.json"), &metrics)?;
    Ok(metrics)
}

pub fn load_policy_models(exp: &Experiment) -> Result<PolicyModels, ReportError> {
    let forecasters = load_forecasters(exp)?;
    let resource: GcnModel = read_json(&gcn_path(&exp.config.models_dir()), "run `phpa train-resource` first")?;
    resource.validate()?;
    PolicyModels::new(forecasters, resource, &exp.graph).map_err(|e| ReportError::Inconsistent(e.to_string()))
}

/// Runs the chosen policy over the last `horizon` minutes and writes
/// `runs/<policy>/{log.csv,summary.json}` (plus `decisions.csv` for the
/// proactive policy).
pub fn simulate(exp: &Experiment, choice: PolicyChoice) -> Result<Vec<RunSummary>, ReportError> {
    let config = &exp.config;
    let policies: Vec<Policy> = match choice {
        PolicyChoice::Reactive { threshold } => {
            let list = match threshold {
                Some(t) => vec![t],
                None => config.hpa.thresholds.clone(),
            };
            list.into_iter()
                .map(|t| Policy::Reactive(config.hpa.config(t)))
                .collect()
        }
        PolicyChoice::GraphPhpa => vec![Policy::GraphPhpa(Box::new(load_policy_models(exp)?))],
    };
    let settings = SimSettings {
        horizon: config.horizon,
        startup_delay: config.startup_delay,
        capacity: config.capacity,
        bounds: exp.bounds.clone(),
    };
    let mut summaries = Vec::new();
    for policy in &policies {
        let log = run_simulation(&exp.graph, &exp.trace, policy, &exp.demand, &settings)?;
        let dir = config.runs_dir().join(&log.policy);
        write_file(&dir.join("log.csv"), &log.to_csv())?;
        if matches!(policy, Policy::GraphPhpa(_)) {
            write_file(&dir.join("decisions.csv"), &log.decisions_csv())?;
        }
        let summary = RunSummary {
            policy: log.policy.clone(),
            trace_digest: exp.trace_digest.clone(),
            horizon: config.horizon,
            seed: config.seed,
            startup_delay: config.startup_delay,
            capacity: config.capacity,
            capacity_limited_minutes: log.capacity_limited_minutes,
            metrics: log.summary(),
        };
        write_json(&dir.join("summary.json"), &summary)?;
        info!(
            "{}: {} pod-minutes, {} overload-minutes",
            summary.policy, summary.metrics.pod_minutes, summary.metrics.overload_minutes
        );
        summaries.push(summary);
    }
    Ok(summaries)
}

pub fn gen_trace(spec: &SyntheticSpec, path: &Path) -> Result<PathBuf, ReportError> {
    write_file(path, &generate_synthetic_trace(spec).to_csv())
}
