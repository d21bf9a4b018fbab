//! Discrete-time cluster hosting the service graph: request fan-out,
//! per-pod utilization, the reactive threshold autoscaler and a minute-by-
//! minute simulation loop that runs either policy against a replayed trace.

mod hpa;
mod log;
mod sim;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::autoscaler::{PolicyError, ScalingBounds};
use crate::predict_gcn::{ServiceGraph, DETAILS, PRODUCTPAGE, RATINGS, REVIEWS};
use crate::tensor::Rng;
use crate::traces::WorkloadTrace;

pub use hpa::{reactive_hpa_step, HpaConfig, ReactiveHpa};
pub use log::{LogRow, ServiceSummary, SimulationLog, SimulationSummary, LOG_HEADER};
pub use sim::{enforce_capacity, run_simulation, ClusterState, Policy, SimSettings, CLUSTER_CAPACITY};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("unknown service '{0}' in demand model")]
    UnknownNode(String),
    #[error("fan-out {from} -> {to} is not an edge of the service graph")]
    UnknownEdge { from: String, to: String },
    #[error("fan-out edges contain a cycle through '{0}'")]
    Cycle(String),
    #[error("invalid demand model: {0}")]
    BadDemand(String),
    #[error("external rate must be finite and >= 0, got {0}")]
    BadExternal(f64),
    #[error("a service needs at least one pod")]
    ZeroPods,
    #[error("invalid HPA config: {0}")]
    BadHpa(String),
    #[error("invalid simulation settings: {0}")]
    BadSettings(String),
    #[error("invalid log: {0}")]
    BadLog(String),
    #[error(transparent)]
    Policy(#[from] PolicyError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanOut {
    pub from: String,
    pub to: String,
    pub factor: f64,
}

/// How external requests turn into per-service load and vCPU consumption.
///
/// The first graph node receives the external traffic; every other node
/// receives `Σ factor · rps(from)` over its incoming fan-out edges. Each
/// service then consumes `rps · cost_per_request` vCPU.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DemandModel {
    /// vCPU-seconds per request `c_i`, keyed by service.
    pub cost_per_request: BTreeMap<String, f64>,
    pub fan_out: Vec<FanOut>,
    /// σ of the per-service multiplicative log-normal noise (mean 1).
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for DemandModel {
    fn default() -> Self {
        Self::bookinfo()
    }
}

impl DemandModel {
    /// Bookinfo routing: productpage calls details and reviews once per
    /// request, and two of three reviews versions call ratings.
    pub fn bookinfo() -> Self {
        let cost = [(PRODUCTPAGE, 0.04), (DETAILS, 0.015), (REVIEWS, 0.025), (RATINGS, 0.01)];
        let edge = |from: &str, to: &str, factor: f64| FanOut {
            from: from.into(),
            to: to.into(),
            factor,
        };
        Self {
            cost_per_request: cost.iter().map(|&(s, c)| (s.to_string(), c)).collect(),
            fan_out: vec![
                edge(PRODUCTPAGE, DETAILS, 1.0),
                edge(PRODUCTPAGE, REVIEWS, 1.0),
                edge(REVIEWS, RATINGS, 2.0 / 3.0),
            ],
            noise_sigma: 0.05,
            seed: 0,
        }
    }

    /// Per-node costs in graph order, after validating against `graph`.
    pub fn costs(&self, graph: &ServiceGraph) -> Result<Vec<f64>, SimError> {
        self.validate(graph)?;
        Ok(graph.nodes().iter().map(|n| self.cost_per_request[n]).collect())
    }

    pub fn validate(&self, graph: &ServiceGraph) -> Result<(), SimError> {
        for (name, &c) in &self.cost_per_request {
            graph.index_of(name).map_err(|_| SimError::UnknownNode(name.clone()))?;
            if !(c > 0.0 && c.is_finite()) {
                return Err(SimError::BadDemand(format!("cost of '{name}' must be > 0, got {c}")));
            }
        }
        if let Some(missing) = graph.nodes().iter().find(|n| !self.cost_per_request.contains_key(*n)) {
            return Err(SimError::BadDemand(format!("no cost for service '{missing}'")));
        }
        for e in &self.fan_out {
            let from = graph
                .index_of(&e.from)
                .map_err(|_| SimError::UnknownNode(e.from.clone()))?;
            let to = graph.index_of(&e.to).map_err(|_| SimError::UnknownNode(e.to.clone()))?;
            if !graph.has_edge(from, to) {
                return Err(SimError::UnknownEdge {
                    from: e.from.clone(),
                    to: e.to.clone(),
                });
            }
            if !(e.factor >= 0.0 && e.factor.is_finite()) {
                return Err(SimError::BadDemand(format!(
                    "fan-out {} -> {} must be >= 0, got {}",
                    e.from, e.to, e.factor
                )));
            }
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(SimError::BadDemand(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }

    /// `(from, to, factor)` index triples in an order where every node's
    /// inputs are complete before its outgoing edges are evaluated.
    fn ordered_edges(&self, graph: &ServiceGraph) -> Result<Vec<(usize, usize, f64)>, SimError> {
        let n = graph.len();
        let edges: Vec<(usize, usize, f64)> = self
            .fan_out
            .iter()
            .map(|e| {
                let from = graph
                    .index_of(&e.from)
                    .map_err(|_| SimError::UnknownNode(e.from.clone()))?;
                let to = graph.index_of(&e.to).map_err(|_| SimError::UnknownNode(e.to.clone()))?;
                Ok((from, to, e.factor))
            })
            .collect::<Result<_, SimError>>()?;
        let mut indegree = vec![0usize; n];
        for &(_, to, _) in &edges {
            indegree[to] += 1;
        }
        let mut ready: Vec<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut order = Vec::with_capacity(edges.len());
        let mut head = 0;
        while head < ready.len() {
            let node = ready[head];
            head += 1;
            for &(from, to, f) in edges.iter().filter(|e| e.0 == node) {
                order.push((from, to, f));
                indegree[to] -= 1;
                if indegree[to] == 0 {
                    ready.push(to);
                }
            }
        }
        if order.len() != edges.len() {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap_or(0);
            return Err(SimError::Cycle(graph.nodes()[stuck].clone()));
        }
        Ok(order)
    }
}

/// Noise-free per-service request rate for an external rate hitting the
/// first graph node.
pub fn propagate_workload(graph: &ServiceGraph, external_rps: f64, demand: &DemandModel) -> Result<Vec<f64>, SimError> {
    demand.validate(graph)?;
    let edges = demand.ordered_edges(graph)?;
    propagate_with(graph.len(), &edges, external_rps)
}

fn propagate_with(n: usize, edges: &[(usize, usize, f64)], external: f64) -> Result<Vec<f64>, SimError> {
    if !(external >= 0.0 && external.is_finite()) {
        return Err(SimError::BadExternal(external));
    }
    let mut rps = vec![0.0; n];
    rps[0] = external;
    for &(from, to, f) in edges {
        rps[to] += f * rps[from];
    }
    Ok(rps)
}

/// Per-pod utilization with load spread evenly over `pods` pods.
pub fn compute_utilization(rps: f64, cost: f64, pods: u32, pod_vcpu: f64) -> Result<f64, SimError> {
    if pods == 0 {
        return Err(SimError::ZeroPods);
    }
    Ok(rps * cost / (pods as f64 * pod_vcpu))
}

/// Per-minute load of every service for one trace, shared by training and
/// by every simulated policy so that they all see the same workload.
#[derive(Debug, Clone, PartialEq)]
pub struct Telemetry {
    pub minutes: Vec<u64>,
    pub external: Vec<f64>,
    /// `rps[i][t]` for service `i`.
    pub rps: Vec<Vec<f64>>,
    /// vCPU consumed, `rps · c`.
    pub usage: Vec<Vec<f64>>,
}

impl Telemetry {
    pub fn len(&self) -> usize {
        self.external.len()
    }

    pub fn is_empty(&self) -> bool {
        self.external.is_empty()
    }
}

/// Replays a 1-minute trace through the demand model. Each service's rate is
/// multiplied by independent `exp(σz − σ²/2)` noise drawn from `demand.seed`.
pub fn generate_telemetry(
    graph: &ServiceGraph,
    trace: &WorkloadTrace,
    demand: &DemandModel,
) -> Result<Telemetry, SimError> {
    if trace.resolution() != 1 {
        return Err(SimError::BadSettings(format!(
            "telemetry needs a 1-minute trace, got resolution {}",
            trace.resolution()
        )));
    }
    let costs = demand.costs(graph)?;
    let edges = demand.ordered_edges(graph)?;
    let n = graph.len();
    let sigma = demand.noise_sigma;
    let mut rng = Rng::new(demand.seed);
    let external = trace.external_rps();
    let mut rps = vec![Vec::with_capacity(external.len()); n];
    for &ext in &external {
        let clean = propagate_with(n, &edges, ext)?;
        for (i, r) in clean.into_iter().enumerate() {
            let noise = if sigma > 0.0 {
                (sigma * rng.standard_normal() - 0.5 * sigma * sigma).exp()
            } else {
                1.0
            };
            rps[i].push(r * noise);
        }
    }
    let usage = rps
        .iter()
        .zip(&costs)
        .map(|(r, &c)| r.iter().map(|v| v * c).collect())
        .collect();
    Ok(Telemetry {
        minutes: trace.bins().iter().map(|b| b.minute).collect(),
        external,
        rps,
        usage,
    })
}

/// Default pod ceilings for the Bookinfo services.
pub fn bookinfo_max_pods(name: &str) -> u32 {
    match name {
        PRODUCTPAGE => 40,
        REVIEWS => 30,
        _ => 20,
    }
}

/// One-vCPU pods with Bookinfo ceilings for every graph node.
pub fn default_bounds(graph: &ServiceGraph) -> Vec<ScalingBounds> {
    graph
        .nodes()
        .iter()
        .map(|n| ScalingBounds::for_pods(bookinfo_max_pods(n), 1.0))
        .collect()
}
