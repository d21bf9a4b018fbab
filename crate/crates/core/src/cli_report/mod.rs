//! Experiment configuration, the train/simulate/compare commands and the
//! JSON, CSV and SVG reports they write.

mod commands;
mod compare;
mod svg;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::autoscaler::ScalingBounds;
use crate::cluster_sim::{
    bookinfo_max_pods, generate_telemetry, DemandModel, HpaConfig, SimError, Telemetry, CLUSTER_CAPACITY,
};
use crate::forecast_lstm::{LstmConfig, LstmError, WorkloadSeries};
use crate::predict_gcn::{GcnConfig, GcnError, ServiceGraph};
use crate::tensor::Rng;
use crate::traces::{
    generate_synthetic_trace, interpolate_to_minutes, load_trace, rescale_trace, SyntheticSpec, TraceError,
    WorkloadTrace,
};

pub use commands::{
    gen_trace, load_policy_models, simulate, train_resource, train_workload, PolicyChoice, ResourceMetrics, RunSummary,
    SplitMetrics, WorkloadMetrics,
};
pub use compare::{compare, savings_percent, ComparisonRow, ComparisonSummary};
pub use svg::pods_chart;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("config: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("missing {path}: {hint}")]
    MissingInput { path: String, hint: String },
    #[error("runs differ in {field}: {left} vs {right}")]
    Mismatch { field: String, left: String, right: String },
    #[error("{0}")]
    Inconsistent(String),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Forecast(#[from] LstmError),
    #[error(transparent)]
    Resource(#[from] GcnError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

pub(crate) fn io_err(path: &Path, e: impl std::fmt::Display) -> ReportError {
    ReportError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<PathBuf, ReportError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| io_err(path, e))?;
    Ok(path.to_path_buf())
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<PathBuf, ReportError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    write_file(path, &text)
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path, hint: &str) -> Result<T, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|_| ReportError::MissingInput {
        path: path.display().to_string(),
        hint: hint.to_string(),
    })?;
    serde_json::from_str(&text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum TraceSource {
    /// `minute,requests` CSV; 5-minute traces are spread over minutes.
    File {
        path: PathBuf,
        resolution: u32,
    },
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundsConfig {
    pub pod_vcpu: f64,
    /// Pod ceiling per service; Bookinfo defaults for services not listed.
    pub max_pods: BTreeMap<String, u32>,
}

impl Default for BoundsConfig {
    fn default() -> Self {
        Self {
            pod_vcpu: 1.0,
            max_pods: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpaSettings {
    /// Scale-out thresholds, one reactive run each.
    pub thresholds: Vec<f64>,
    pub scale_in: f64,
    pub stabilization_minutes: u32,
}

impl Default for HpaSettings {
    fn default() -> Self {
        let d = HpaConfig::default();
        Self {
            thresholds: vec![0.9, 0.7],
            scale_in: d.scale_in,
            stabilization_minutes: d.stabilization_minutes,
        }
    }
}

impl HpaSettings {
    pub fn config(&self, threshold: f64) -> HpaConfig {
        HpaConfig {
            scale_out: threshold,
            scale_in: self.scale_in,
            stabilization_minutes: self.stabilization_minutes,
        }
    }
}

fn default_startup_delay() -> u32 {
    1
}

fn default_capacity() -> u32 {
    CLUSTER_CAPACITY
}

fn default_horizon() -> usize {
    800
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

/// One experiment. Relative paths are resolved against the directory of the
/// config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Graph JSON (`{"nodes": [...], "edges": [[a, b], ...]}`); Bookinfo when absent.
    #[serde(default)]
    pub graph: Option<PathBuf>,
    pub trace: TraceSource,
    /// Peak requests per minute after rescaling; unscaled when absent.
    #[serde(default)]
    pub target_peak: Option<f64>,
    #[serde(default)]
    pub demand: DemandModel,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub lstm: LstmConfig,
    #[serde(default)]
    pub gcn: GcnConfig,
    #[serde(default)]
    pub hpa: HpaSettings,
    #[serde(default = "default_startup_delay")]
    pub startup_delay: u32,
    #[serde(default = "default_capacity")]
    pub capacity: u32,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn parse(text: &str, base_dir: &Path) -> Result<Self, ReportError> {
        let mut config: Self = serde_json::from_str(text).map_err(|e| ReportError::Config(e.to_string()))?;
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base_dir.join(&*p);
            }
        };
        if let Some(g) = config.graph.as_mut() {
            resolve(g);
        }
        if let TraceSource::File { path, .. } = &mut config.trace {
            resolve(path);
        }
        resolve(&mut config.out_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            ReportError::Config(m) => ReportError::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ReportError> {
        let bad = |m: String| Err(ReportError::Config(m));
        if self.horizon < 1 {
            return bad("horizon must be >= 1".into());
        }
        if self.hpa.thresholds.is_empty() {
            return bad("hpa.thresholds must not be empty".into());
        }
        for &t in &self.hpa.thresholds {
            if !(t > 0.0 && t <= 1.0) {
                return bad(format!("threshold {t} outside (0, 1]"));
            }
            self.hpa
                .config(t)
                .validate()
                .map_err(|e| ReportError::Config(e.to_string()))?;
        }
        if let Some(p) = self.target_peak {
            if !(p > 0.0 && p.is_finite()) {
                return bad(format!("target_peak must be positive, got {p}"));
            }
        }
        if let Some(g) = &self.graph {
            if !g.exists() {
                return bad(format!("graph file {} does not exist", g.display()));
            }
        }
        if let TraceSource::File { path, .. } = &self.trace {
            if !path.exists() {
                return bad(format!("trace file {} does not exist", path.display()));
            }
        }
        if !(self.bounds.pod_vcpu > 0.0 && self.bounds.pod_vcpu.is_finite()) {
            return bad("bounds.pod_vcpu must be positive".into());
        }
        self.lstm.validate()?;
        Ok(())
    }

    pub fn with_overrides(mut self, seed: Option<u64>, out: Option<PathBuf>) -> Self {
        if let Some(s) = seed {
            self.seed = s;
        }
        if let Some(o) = out {
            self.out_dir = o;
        }
        self
    }

    /// Seed of service `i`'s forecaster.
    pub fn lstm_seed(&self, service: usize) -> u64 {
        Rng::new(self.seed).fork(100 + service as u64).next_u64()
    }

    pub fn gcn_seed(&self) -> u64 {
        Rng::new(self.seed).fork(200).next_u64()
    }

    pub fn models_dir(&self) -> PathBuf {
        self.out_dir.join("models")
    }

    pub fn runs_dir(&self) -> PathBuf {
        self.out_dir.join("runs")
    }
}

/// Everything derived from a config before any model is trained.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub graph: ServiceGraph,
    /// 1-minute trace after interpolation and rescaling.
    pub trace: WorkloadTrace,
    pub trace_digest: String,
    /// Demand model carrying the experiment seed.
    pub demand: DemandModel,
    pub bounds: Vec<ScalingBounds>,
    pub telemetry: Telemetry,
}

impl Experiment {
    pub fn prepare(config: ExperimentConfig) -> Result<Self, ReportError> {
        let graph = match &config.graph {
            Some(p) => ServiceGraph::load(p)?,
            None => ServiceGraph::bookinfo(),
        };
        let raw = match &config.trace {
            TraceSource::File { path, resolution } => load_trace(path, *resolution)?,
            TraceSource::Synthetic(spec) => generate_synthetic_trace(spec),
        };
        let minutes = match raw.resolution() {
            1 => raw,
            5 => interpolate_to_minutes(&raw)?,
            r => {
                return Err(ReportError::Config(format!(
                    "trace resolution must be 1 or 5 minutes, got {r}"
                )))
            }
        };
        let trace = match config.target_peak {
            Some(p) => rescale_trace(&minutes, p)?,
            None => minutes,
        };
        let demand = DemandModel {
            seed: config.seed,
            ..config.demand.clone()
        };
        for name in config.bounds.max_pods.keys() {
            graph
                .index_of(name)
                .map_err(|_| ReportError::Config(format!("bounds.max_pods names unknown service '{name}'")))?;
        }
        let bounds = graph
            .nodes()
            .iter()
            .map(|n| {
                let q = config
                    .bounds
                    .max_pods
                    .get(n)
                    .copied()
                    .unwrap_or_else(|| bookinfo_max_pods(n));
                ScalingBounds::for_pods(q, config.bounds.pod_vcpu)
            })
            .collect();
        let telemetry = generate_telemetry(&graph, &trace, &demand)?;
        if config.horizon + config.lstm.window > telemetry.len() {
            return Err(ReportError::Config(format!(
                "horizon {} leaves too little history in a {}-minute trace",
                config.horizon,
                telemetry.len()
            )));
        }
        let trace_digest = sha256_hex(trace.to_csv().as_bytes());
        Ok(Self {
            config,
            graph,
            trace,
            trace_digest,
            demand,
            bounds,
            telemetry,
        })
    }

    pub fn services(&self) -> &[String] {
        self.graph.nodes()
    }

    /// Observed request rate of every service.
    pub fn workload_series(&self) -> Result<Vec<WorkloadSeries>, ReportError> {
        let start = self.telemetry.minutes.first().copied().unwrap_or(0);
        self.services()
            .iter()
            .zip(&self.telemetry.rps)
            .map(|(s, r)| Ok(WorkloadSeries::new(s, start, r.clone())?))
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
