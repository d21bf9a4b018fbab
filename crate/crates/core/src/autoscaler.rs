//! Turns predicted vCPU requirements into pod counts.
//!
//! Each step clamps the predicted share into `[R_lb, R_ub]`, then adds
//! `⌈(R_new − R_prev) / v⌉` pods when the share grows or removes
//! `⌈(R_prev − R_new) / v⌉` pods when it shrinks, keeping `1 ≤ N ≤ Q`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forecast_lstm::{LstmError, LstmModel};
use crate::predict_gcn::{GcnError, GcnModel, ServiceGraph};
use crate::tensor::Matrix;

/// Relative slack when taking ceilings of share ratios, so that a difference
/// which is an exact multiple of the pod size in decimal (e.g. 0.6 / 0.2)
/// does not round up an extra pod because of binary representation.
const CEIL_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum ScalingError {
    #[error("input lengths differ: {0}")]
    LengthMismatch(String),
    #[error("service {service}: invalid bounds ({reason})")]
    InvalidBounds { service: usize, reason: String },
    #[error("service {service}: current pods {pods} outside [1, {max}]")]
    PodsOutOfBounds { service: usize, pods: u32, max: u32 },
    #[error("service {service}: current share {share} outside [{lower}, {upper}]")]
    ShareOutOfBounds {
        service: usize,
        share: f64,
        lower: f64,
        upper: f64,
    },
    #[error("service {service}: predicted share {value} is not finite")]
    NonFinitePrediction { service: usize, value: f64 },
}

/// Per-service limits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBounds {
    /// Upper bound `Q` on pods.
    pub max_pods: u32,
    /// Lower vCPU bound `R_lb`.
    pub vcpu_lower: f64,
    /// Upper vCPU bound `R_ub`.
    pub vcpu_upper: f64,
    /// vCPU per pod `v^p`.
    pub pod_vcpu: f64,
}

impl ScalingBounds {
    /// One pod minimum, `max_pods` maximum, shares bounded to match.
    pub fn for_pods(max_pods: u32, pod_vcpu: f64) -> Self {
        Self {
            max_pods,
            vcpu_lower: pod_vcpu,
            vcpu_upper: max_pods as f64 * pod_vcpu,
            pod_vcpu,
        }
    }

    pub fn validate(&self, service: usize) -> Result<(), ScalingError> {
        let bad = |reason: &str| {
            Err(ScalingError::InvalidBounds {
                service,
                reason: reason.to_string(),
            })
        };
        if self.max_pods < 1 {
            return bad("max_pods must be >= 1");
        }
        if !(self.vcpu_lower > 0.0 && self.vcpu_lower <= self.vcpu_upper && self.vcpu_upper.is_finite()) {
            return bad("need 0 < vcpu_lower <= vcpu_upper");
        }
        if !(self.pod_vcpu > 0.0 && self.pod_vcpu.is_finite()) {
            return bad("pod_vcpu must be positive");
        }
        Ok(())
    }

    pub fn clamp_share(&self, share: f64) -> f64 {
        share.clamp(self.vcpu_lower, self.vcpu_upper)
    }

    pub fn clamp_pods(&self, pods: u32) -> u32 {
        pods.clamp(1, self.max_pods)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceDecision {
    pub share_prev: f64,
    pub share: f64,
    pub pods_prev: u32,
    pub pods: u32,
    pub delta: i64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingDecision {
    pub services: Vec<ServiceDecision>,
}

impl ScalingDecision {
    pub fn shares(&self) -> Vec<f64> {
        self.services.iter().map(|s| s.share).collect()
    }

    pub fn pods(&self) -> Vec<u32> {
        self.services.iter().map(|s| s.pods).collect()
    }

    /// Decision log rows, one per service.
    pub fn csv_rows(&self, minute: u64, names: &[String]) -> Vec<String> {
        self.services
            .iter()
            .zip(names)
            .map(|(d, name)| {
                format!(
                    "{minute},{name},{},{},{},{},{}",
                    d.share_prev, d.share, d.pods_prev, d.pods, d.delta
                )
            })
            .collect()
    }
}

pub const DECISION_LOG_HEADER: &str = "minute,service,R_prev,R_new,N_prev,N_new,delta";

/// `⌈x⌉` tolerant to representation error just above an integer.
pub fn ceil_units(x: f64) -> u64 {
    let slack = CEIL_SLACK * x.abs().max(1.0);
    (x - slack).ceil().max(0.0) as u64
}

/// One integration step for every service.
pub fn integrate_step(
    current_shares: &[f64],
    current_pods: &[u32],
    predicted: &[f64],
    bounds: &[ScalingBounds],
) -> Result<ScalingDecision, ScalingError> {
    let n = bounds.len();
    if current_shares.len() != n || current_pods.len() != n || predicted.len() != n {
        return Err(ScalingError::LengthMismatch(format!(
            "{} shares, {} pod counts, {} predictions, {n} bounds",
            current_shares.len(),
            current_pods.len(),
            predicted.len()
        )));
    }
    let mut services = Vec::with_capacity(n);
    for i in 0..n {
        let b = &bounds[i];
        b.validate(i)?;
        let (r_prev, n_prev, pred) = (current_shares[i], current_pods[i], predicted[i]);
        if n_prev < 1 || n_prev > b.max_pods {
            return Err(ScalingError::PodsOutOfBounds {
                service: i,
                pods: n_prev,
                max: b.max_pods,
            });
        }
        if !(r_prev >= b.vcpu_lower && r_prev <= b.vcpu_upper) {
            return Err(ScalingError::ShareOutOfBounds {
                service: i,
                share: r_prev,
                lower: b.vcpu_lower,
                upper: b.vcpu_upper,
            });
        }
        if !pred.is_finite() {
            return Err(ScalingError::NonFinitePrediction {
                service: i,
                value: pred,
            });
        }
        let r_new = b.clamp_share(pred);
        let q = b.max_pods as u64;
        let n_new = if r_new > r_prev {
            let add = ceil_units((r_new - r_prev) / b.pod_vcpu);
            (n_prev as u64).saturating_add(add).min(q)
        } else if r_new < r_prev {
            let remove = ceil_units((r_prev - r_new) / b.pod_vcpu);
            (n_prev as u64).saturating_sub(remove).max(1).min(q)
        } else {
            n_prev as u64
        } as u32;
        services.push(ServiceDecision {
            share_prev: r_prev,
            share: r_new,
            pods_prev: n_prev,
            pods: n_new,
            delta: n_new as i64 - n_prev as i64,
        });
    }
    Ok(ScalingDecision { services })
}

/// Rounds a predicted requirement up to a whole number of pods' worth of vCPU.
pub fn provisioned_share(predicted: f64, pod_vcpu: f64) -> f64 {
    ceil_units(predicted.max(0.0) / pod_vcpu) as f64 * pod_vcpu
}

#[derive(Debug, Error)]
pub enum PolicyError {
    #[error(transparent)]
    Forecast(#[from] LstmError),
    #[error(transparent)]
    Resource(#[from] GcnError),
    #[error(transparent)]
    Scaling(#[from] ScalingError),
    #[error("policy models inconsistent: {0}")]
    Models(String),
    #[error("service {service}: history has {got} points, need {need}")]
    ShortHistory { service: usize, got: usize, need: usize },
}

/// Trained models for the proactive policy: one forecaster per graph node,
/// in node order, and the graph-level resource model.
#[derive(Debug, Clone)]
pub struct PolicyModels {
    pub forecasters: Vec<LstmModel>,
    pub resource: GcnModel,
}

impl PolicyModels {
    pub fn new(forecasters: Vec<LstmModel>, resource: GcnModel, graph: &ServiceGraph) -> Result<Self, PolicyError> {
        if forecasters.len() != graph.len() {
            return Err(PolicyError::Models(format!(
                "{} forecasters for {} services",
                forecasters.len(),
                graph.len()
            )));
        }
        let k = resource.config.input_features;
        if let Some(m) = forecasters.iter().find(|m| m.window() != k) {
            return Err(PolicyError::Models(format!(
                "forecaster window {} differs from resource model input width {k}",
                m.window()
            )));
        }
        Ok(Self { forecasters, resource })
    }

    pub fn window(&self) -> usize {
        self.resource.config.input_features
    }
}

/// Allocation carried between steps.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyState {
    pub shares: Vec<f64>,
    pub pods: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyStep {
    /// ã(t+1) per service.
    pub forecast: Vec<f64>,
    /// b̃(t+1) per service, before rounding to whole pods.
    pub predicted_vcpu: Vec<f64>,
    pub decision: ScalingDecision,
}

/// Forecast → resource prediction → integration for one minute.
///
/// `history[i]` holds the observed workload of service `i` up to and
/// including the current minute; only the last `k` values are used.
pub fn run_policy_step(
    models: &PolicyModels,
    graph: &ServiceGraph,
    history: &[Vec<f64>],
    state: &PolicyState,
    bounds: &[ScalingBounds],
) -> Result<PolicyStep, PolicyError> {
    let k = models.window();
    let n = graph.len();
    if history.len() != n || bounds.len() != n {
        return Err(PolicyError::Models(format!(
            "{} histories and {} bounds for {n} services",
            history.len(),
            bounds.len()
        )));
    }
    let mut features = Matrix::zeros(n, k);
    let mut forecast = Vec::with_capacity(n);
    for (i, (h, model)) in history.iter().zip(&models.forecasters).enumerate() {
        if h.len() < k {
            return Err(PolicyError::ShortHistory {
                service: i,
                got: h.len(),
                need: k,
            });
        }
        let window = &h[h.len() - k..];
        let next = model.predict(window)?;
        let row = features.row_mut(i);
        row[..k - 1].copy_from_slice(&window[1..]);
        row[k - 1] = next;
        forecast.push(next);
    }
    let predicted_vcpu = models.resource.predict(graph, &features)?;
    let requested: Vec<f64> = predicted_vcpu
        .iter()
        .zip(bounds)
        .map(|(&b, bound)| provisioned_share(b, bound.pod_vcpu))
        .collect();
    let decision = integrate_step(&state.shares, &state.pods, &requested, bounds)?;
    Ok(PolicyStep {
        forecast,
        predicted_vcpu,
        decision,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bounds(q: u32, lb: f64, ub: f64, v: f64) -> ScalingBounds {
        ScalingBounds {
            max_pods: q,
            vcpu_lower: lb,
            vcpu_upper: ub,
            pod_vcpu: v,
        }
    }

    #[test]
    fn half_vcpu_increase_adds_one_half_vcpu_pod() {
        let d = integrate_step(&[2.0], &[4], &[2.5], &[bounds(10, 0.5, 5.0, 0.5)]).unwrap();
        assert_eq!(d.services[0].pods, 5);
        assert_eq!(d.services[0].delta, 1);
        assert_eq!(d.services[0].share, 2.5);
    }

    #[test]
    fn unchanged_share_keeps_pods() {
        let d = integrate_step(&[1.7], &[3], &[1.7], &[bounds(10, 0.5, 5.0, 1.0)]).unwrap();
        assert_eq!(d.services[0].pods, 3);
        assert_eq!(d.services[0].delta, 0);
    }

    #[test]
    fn increase_capped_at_max_pods() {
        // ⌈2.2⌉ = 3 requested on top of 1, capped at Q = 3
        let d = integrate_step(&[1.0], &[1], &[3.2], &[bounds(3, 1.0, 5.0, 1.0)]).unwrap();
        assert_eq!(d.services[0].pods, 3);
        assert_eq!(d.services[0].delta, 2);
    }

    #[test]
    fn decrease_floors_at_one_pod() {
        let d = integrate_step(&[4.0], &[2], &[0.0], &[bounds(10, 0.5, 5.0, 1.0)]).unwrap();
        assert_eq!(d.services[0].share, 0.5);
        // ⌈3.5⌉ = 4 removed from 2 → floor at 1
        assert_eq!(d.services[0].pods, 1);
        assert_eq!(d.services[0].delta, -1);
    }

    #[test]
    fn decimal_multiples_are_exact() {
        // 0.7 − 0.1 is 0.6 in decimal but 0.59999… in binary; 0.6 / 0.2 is 2.9999…
        let d = integrate_step(&[0.1], &[1], &[0.7], &[bounds(10, 0.1, 5.0, 0.2)]).unwrap();
        assert_eq!(d.services[0].delta, 3);
        let d = integrate_step(&[0.3], &[5], &[0.1], &[bounds(10, 0.1, 5.0, 0.1)]).unwrap();
        assert_eq!(d.services[0].delta, -2);
        assert_eq!(ceil_units(3.0000000000000004), 3);
        assert_eq!(ceil_units(3.001), 4);
    }

    #[test]
    fn precondition_violations() {
        let b = [bounds(3, 1.0, 3.0, 1.0)];
        assert!(matches!(
            integrate_step(&[1.0], &[0], &[1.0], &b),
            Err(ScalingError::PodsOutOfBounds { .. })
        ));
        assert!(matches!(
            integrate_step(&[0.5], &[1], &[1.0], &b),
            Err(ScalingError::ShareOutOfBounds { .. })
        ));
        assert!(matches!(
            integrate_step(&[1.0], &[1], &[f64::NAN], &b),
            Err(ScalingError::NonFinitePrediction { .. })
        ));
        assert!(matches!(
            integrate_step(&[1.0, 1.0], &[1], &[1.0], &b),
            Err(ScalingError::LengthMismatch(_))
        ));
        assert!(matches!(
            integrate_step(&[1.0], &[1], &[1.0], &[bounds(3, 2.0, 1.0, 1.0)]),
            Err(ScalingError::InvalidBounds { .. })
        ));
    }

    #[test]
    fn csv_rows_format() {
        let d = integrate_step(&[2.0], &[4], &[2.5], &[bounds(10, 0.5, 5.0, 0.5)]).unwrap();
        assert_eq!(
            d.csv_rows(7, &["productpage".into()]),
            vec!["7,productpage,2,2.5,4,5,1"]
        );
    }

    #[test]
    fn provisioned_share_rounds_up_to_pods() {
        assert_eq!(provisioned_share(2.5, 1.0), 3.0);
        assert_eq!(provisioned_share(3.0, 1.0), 3.0);
        assert_eq!(provisioned_share(-1.0, 1.0), 0.0);
        assert_eq!(provisioned_share(0.3, 0.5), 0.5);
    }

    fn arb_case() -> impl Strategy<Value = (ScalingBounds, f64, u32, f64)> {
        (1u32..80, 0.1f64..2.0, 0.05f64..1.0, 1.0f64..20.0).prop_flat_map(|(q, v, lb, span)| {
            let b = ScalingBounds {
                max_pods: q,
                vcpu_lower: lb,
                vcpu_upper: lb + span,
                pod_vcpu: v,
            };
            (Just(b), lb..=lb + span, 1..=q, -5.0f64..40.0)
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]
        #[test]
        fn outputs_stay_in_bounds((b, r, n, pred) in arb_case()) {
            let d = integrate_step(&[r], &[n], &[pred], &[b]).unwrap();
            let s = d.services[0];
            prop_assert!(s.pods >= 1 && s.pods <= b.max_pods);
            prop_assert!(s.share >= b.vcpu_lower && s.share <= b.vcpu_upper);
            prop_assert_eq!(s.delta, s.pods as i64 - n as i64);
        }

        #[test]
        fn larger_prediction_never_fewer_pods((b, r, n, pred) in arb_case(), bump in 0.0f64..10.0) {
            let lo = integrate_step(&[r], &[n], &[pred], &[b]).unwrap().services[0].pods;
            let hi = integrate_step(&[r], &[n], &[pred + bump], &[b]).unwrap().services[0].pods;
            prop_assert!(hi >= lo);
        }

        #[test]
        fn exact_multiples_add_the_quotient(units in 1u32..10, n in 1u32..20, v_tenths in 1u32..20, r_tenths in 10u32..30) {
            let v = v_tenths as f64 / 10.0;
            let r = r_tenths as f64 / 10.0;
            let target = r + units as f64 * v;
            let b = ScalingBounds { max_pods: 1000, vcpu_lower: 0.1, vcpu_upper: 1000.0, pod_vcpu: v };
            let d = integrate_step(&[r], &[n], &[target], &[b]).unwrap();
            prop_assert_eq!(d.services[0].delta, units as i64);
        }
    }
}
