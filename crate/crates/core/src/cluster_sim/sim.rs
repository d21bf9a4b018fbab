use log::warn;

use super::{generate_telemetry, DemandModel, HpaConfig, LogRow, ReactiveHpa, SimError, SimulationLog};
use crate::autoscaler::{run_policy_step, PolicyModels, PolicyState, ScalingBounds, ServiceDecision};
use crate::predict_gcn::ServiceGraph;
use crate::traces::WorkloadTrace;

pub const CLUSTER_CAPACITY: u32 = 79;

/// Snapshot of one simulated minute.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterState {
    pub minute: u64,
    /// Allocated pods, including ones still starting.
    pub pods: Vec<u32>,
    /// Pods serving traffic.
    pub ready: Vec<u32>,
    /// Requests per second per service.
    pub workload: Vec<f64>,
    /// Per-pod utilization over ready pods.
    pub utilization: Vec<f64>,
    pub overloaded: Vec<bool>,
}

#[derive(Debug, Clone)]
pub enum Policy {
    Reactive(HpaConfig),
    GraphPhpa(Box<PolicyModels>),
}

impl Policy {
    pub fn name(&self) -> String {
        match self {
            Policy::Reactive(c) => format!("reactive-{:.2}", c.scale_out),
            Policy::GraphPhpa(_) => "graph-phpa".to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSettings {
    /// Simulated minutes, taken from the end of the trace.
    pub horizon: usize,
    /// Minutes from a scale-up decision until the new pods serve traffic.
    pub startup_delay: u32,
    pub capacity: u32,
    /// Per-service bounds in graph order.
    pub bounds: Vec<ScalingBounds>,
}

impl SimSettings {
    pub fn new(horizon: usize, bounds: Vec<ScalingBounds>) -> Self {
        Self {
            horizon,
            startup_delay: 1,
            capacity: CLUSTER_CAPACITY,
            bounds,
        }
    }

    fn validate(&self, services: usize) -> Result<(), SimError> {
        if self.bounds.len() != services {
            return Err(SimError::BadSettings(format!(
                "{} bounds for {services} services",
                self.bounds.len()
            )));
        }
        for (i, b) in self.bounds.iter().enumerate() {
            b.validate(i).map_err(|e| SimError::BadSettings(e.to_string()))?;
        }
        if (self.capacity as usize) < services {
            return Err(SimError::BadSettings(format!(
                "capacity {} cannot hold one pod for each of {services} services",
                self.capacity
            )));
        }
        if self.horizon == 0 {
            return Err(SimError::BadSettings("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// Applies `desired` pod counts without exceeding `capacity` in total.
///
/// Scale-downs are applied first; scale-ups are then granted in service
/// order until capacity runs out. `current` must already fit.
pub fn enforce_capacity(current: &[u32], desired: &[u32], capacity: u32) -> Vec<u32> {
    let mut out: Vec<u32> = current.iter().zip(desired).map(|(&c, &d)| c.min(d)).collect();
    let mut used: u32 = out.iter().sum();
    for i in 0..out.len() {
        if desired[i] > out[i] {
            let grant = (desired[i] - out[i]).min(capacity.saturating_sub(used));
            out[i] += grant;
            used += grant;
        }
    }
    out
}

/// Pods of one service: ready ones plus a queue of `(ready_at, count)`.
#[derive(Debug, Clone)]
struct Deployment {
    ready: u32,
    pending: Vec<(u64, u32)>,
}

impl Deployment {
    fn allocated(&self) -> u32 {
        self.ready + self.pending.iter().map(|p| p.1).sum::<u32>()
    }

    fn activate(&mut self, minute: u64) {
        let ready = &mut self.ready;
        self.pending.retain(|&(at, count)| {
            if at <= minute {
                *ready += count;
                false
            } else {
                true
            }
        });
    }

    /// Moves to `target` allocated pods; removals cancel starting pods first.
    fn resize(&mut self, target: u32, ready_at: u64) {
        let current = self.allocated();
        if target > current {
            self.pending.push((ready_at, target - current));
            return;
        }
        let mut remove = current - target;
        while remove > 0 {
            match self.pending.last_mut() {
                Some(last) if last.1 > remove => {
                    last.1 -= remove;
                    remove = 0;
                }
                Some(last) => {
                    remove -= last.1;
                    self.pending.pop();
                }
                None => {
                    self.ready -= remove;
                    remove = 0;
                }
            }
        }
    }
}

/// Replays the last `settings.horizon` minutes of a 1-minute trace.
///
/// Earlier minutes are history: they seed the initial pod counts (enough
/// pods for the minute before the horizon) and the predictors' input
/// windows. At the end of every minute the policy sees that minute's load
/// and decides the next allocation; scale-downs apply from the next minute,
/// scale-ups are allocated from the next minute and serve traffic after
/// `startup_delay` minutes.
pub fn run_simulation(
    graph: &ServiceGraph,
    trace: &WorkloadTrace,
    policy: &Policy,
    demand: &DemandModel,
    settings: &SimSettings,
) -> Result<SimulationLog, SimError> {
    let n = graph.len();
    settings.validate(n)?;
    if let Policy::Reactive(c) = policy {
        c.validate()?;
    }
    let telemetry = generate_telemetry(graph, trace, demand)?;
    let len = telemetry.len();
    let horizon = settings.horizon;
    let history_needed = match policy {
        Policy::Reactive(_) => 1,
        Policy::GraphPhpa(m) => m.window().saturating_sub(1).max(1),
    };
    if len < horizon + history_needed {
        return Err(SimError::BadSettings(format!(
            "trace has {len} minutes; horizon {horizon} needs {} more minutes of history",
            history_needed
        )));
    }
    let start = len - horizon;
    let bounds = &settings.bounds;
    let max_pods: Vec<u32> = bounds.iter().map(|b| b.max_pods).collect();

    let initial: Vec<u32> = (0..n)
        .map(|i| {
            let need = (telemetry.usage[i][start - 1] / bounds[i].pod_vcpu - 1e-9).ceil();
            (need.max(1.0) as u32).min(max_pods[i])
        })
        .collect();
    let initial = enforce_capacity(&vec![1; n], &initial, settings.capacity);
    let mut deployments: Vec<Deployment> = initial
        .iter()
        .map(|&ready| Deployment {
            ready,
            pending: Vec::new(),
        })
        .collect();

    let mut reactive = match policy {
        Policy::Reactive(c) => Some(ReactiveHpa::new(*c, n)),
        Policy::GraphPhpa(_) => None,
    };
    let mut phpa_state = PolicyState {
        shares: initial
            .iter()
            .zip(bounds)
            .map(|(&p, b)| b.clamp_share(p as f64 * b.pod_vcpu))
            .collect(),
        pods: initial.clone(),
    };

    let name = policy.name();
    let mut log = SimulationLog::new(name.clone(), graph.nodes().to_vec());
    for t in start..len {
        let minute = telemetry.minutes[t];
        for d in &mut deployments {
            d.activate(minute);
        }
        let pods: Vec<u32> = deployments.iter().map(Deployment::allocated).collect();
        let ready: Vec<u32> = deployments.iter().map(|d| d.ready).collect();
        let workload: Vec<f64> = (0..n).map(|i| telemetry.rps[i][t]).collect();
        let utilization: Vec<f64> = (0..n)
            .map(|i| telemetry.usage[i][t] / (ready[i] as f64 * bounds[i].pod_vcpu))
            .collect();
        let state = ClusterState {
            minute,
            overloaded: utilization.iter().map(|&u| u > 1.0).collect(),
            pods,
            ready,
            workload,
            utilization,
        };

        let (desired, phpa_decision) = match policy {
            Policy::Reactive(_) => (reactive.as_mut().expect("reactive state").step(&state, &max_pods), None),
            Policy::GraphPhpa(models) => {
                let history: Vec<Vec<f64>> = telemetry.rps.iter().map(|r| r[..=t].to_vec()).collect();
                phpa_state.pods = state.pods.clone();
                let step = run_policy_step(models, graph, &history, &phpa_state, bounds)?;
                (step.decision.pods(), Some(step.decision))
            }
        };
        let applied = enforce_capacity(&state.pods, &desired, settings.capacity);
        if applied != desired {
            warn!(
                "{name}: minute {minute}: cluster capacity {} reached",
                settings.capacity
            );
            log.capacity_limited_minutes += 1;
        }

        if let Some(decision) = phpa_decision {
            let mut applied_decisions = Vec::with_capacity(n);
            for (i, d) in decision.services.iter().enumerate() {
                let share = if applied[i] == d.pods {
                    d.share
                } else {
                    bounds[i].clamp_share(applied[i] as f64 * bounds[i].pod_vcpu)
                };
                phpa_state.shares[i] = share;
                applied_decisions.push(ServiceDecision {
                    share,
                    pods: applied[i],
                    delta: applied[i] as i64 - d.pods_prev as i64,
                    ..*d
                });
            }
            log.push_decisions(minute, &applied_decisions);
        }

        for i in 0..n {
            log.rows.push(LogRow {
                minute,
                service: graph.nodes()[i].clone(),
                external_rps: telemetry.external[t],
                service_rps: state.workload[i],
                pods: state.pods[i],
                utilization: state.utilization[i],
                overloaded: state.overloaded[i],
                decision_delta: applied[i] as i64 - state.pods[i] as i64,
            });
        }
        let ready_at = minute + settings.startup_delay.max(1) as u64;
        for (d, &target) in deployments.iter_mut().zip(&applied) {
            d.resize(target, ready_at);
        }
    }
    Ok(log)
}
