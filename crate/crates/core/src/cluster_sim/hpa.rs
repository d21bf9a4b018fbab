use serde::{Deserialize, Serialize};

use super::{ClusterState, SimError};

/// Threshold rules of the reactive baseline.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HpaConfig {
    pub scale_out: f64,
    pub scale_in: f64,
    /// Consecutive minutes below `scale_in` before a pod is removed.
    pub stabilization_minutes: u32,
}

impl Default for HpaConfig {
    fn default() -> Self {
        Self {
            scale_out: 0.9,
            scale_in: 0.3,
            stabilization_minutes: 5,
        }
    }
}

impl HpaConfig {
    pub fn with_threshold(scale_out: f64) -> Self {
        Self {
            scale_out,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0 < self.scale_in && self.scale_in < self.scale_out && self.scale_out <= 1.0) {
            return Err(SimError::BadHpa(format!(
                "need 0 < scale_in ({}) < scale_out ({}) <= 1",
                self.scale_in, self.scale_out
            )));
        }
        Ok(())
    }
}

/// One decision of the reactive baseline for every service.
///
/// Pods share load evenly, so "any pod above" and "all pods below" both
/// reduce to the service's per-pod utilization. A service above `scale_out`
/// gets one more pod (up to `max_pods`); a service that has been below
/// `scale_in` for `stabilization_minutes` consecutive minutes, this one
/// included, loses one pod (down to 1). `below_streak` carries those counts
/// between calls. Cluster capacity is applied afterwards by the simulator.
pub fn reactive_hpa_step(
    state: &ClusterState,
    config: &HpaConfig,
    below_streak: &mut [u32],
    max_pods: &[u32],
) -> Vec<u32> {
    state
        .pods
        .iter()
        .zip(&state.utilization)
        .zip(below_streak.iter_mut().zip(max_pods))
        .map(|((&n, &u), (streak, &q))| {
            if u > config.scale_out {
                *streak = 0;
                (n + 1).min(q)
            } else if u < config.scale_in {
                *streak += 1;
                if *streak >= config.stabilization_minutes {
                    n.saturating_sub(1).max(1)
                } else {
                    n
                }
            } else {
                *streak = 0;
                n
            }
        })
        .collect()
}

/// Reactive policy with its per-service scale-in memory.
#[derive(Debug, Clone)]
pub struct ReactiveHpa {
    pub config: HpaConfig,
    below_streak: Vec<u32>,
}

impl ReactiveHpa {
    pub fn new(config: HpaConfig, services: usize) -> Self {
        Self {
            config,
            below_streak: vec![0; services],
        }
    }

    pub fn step(&mut self, state: &ClusterState, max_pods: &[u32]) -> Vec<u32> {
        reactive_hpa_step(state, &self.config, &mut self.below_streak, max_pods)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(pods: Vec<u32>, utilization: Vec<f64>) -> ClusterState {
        let n = pods.len();
        ClusterState {
            minute: 0,
            ready: pods.clone(),
            pods,
            workload: vec![0.0; n],
            overloaded: utilization.iter().map(|&u| u > 1.0).collect(),
            utilization,
        }
    }

    #[test]
    fn above_threshold_adds_a_pod() {
        let mut hpa = ReactiveHpa::new(HpaConfig::with_threshold(0.9), 1);
        assert_eq!(hpa.step(&state(vec![2], vec![0.95]), &[10]), vec![3]);
        assert_eq!(hpa.step(&state(vec![10], vec![0.95]), &[10]), vec![10]);
    }

    #[test]
    fn between_thresholds_holds() {
        let mut hpa = ReactiveHpa::new(HpaConfig::default(), 1);
        for _ in 0..20 {
            assert_eq!(hpa.step(&state(vec![3], vec![0.5]), &[10]), vec![3]);
        }
    }

    #[test]
    fn sustained_low_utilization_removes_one_pod() {
        let mut hpa = ReactiveHpa::new(HpaConfig::default(), 1);
        let low = state(vec![3], vec![0.1]);
        for _ in 0..4 {
            assert_eq!(hpa.step(&low, &[10]), vec![3]);
        }
        assert_eq!(hpa.step(&low, &[10]), vec![2]);
        // a high minute resets the window
        let mut hpa = ReactiveHpa::new(HpaConfig::default(), 1);
        for _ in 0..4 {
            hpa.step(&low, &[10]);
        }
        hpa.step(&state(vec![3], vec![0.5]), &[10]);
        assert_eq!(hpa.step(&low, &[10]), vec![3]);
        let mut hpa = ReactiveHpa::new(HpaConfig::default(), 1);
        for _ in 0..10 {
            assert_eq!(hpa.step(&state(vec![1], vec![0.0]), &[10]), vec![1]);
        }
    }

    #[test]
    fn never_moves_more_than_one_pod() {
        let mut hpa = ReactiveHpa::new(HpaConfig::with_threshold(0.7), 3);
        for u in [0.0, 0.2, 0.29, 0.5, 0.71, 3.0, 0.05, 0.05, 0.05, 0.05, 0.05, 0.05] {
            let s = state(vec![5, 5, 5], vec![u, u / 2.0, u * 2.0]);
            let next = hpa.step(&s, &[20, 20, 20]);
            for (a, b) in s.pods.iter().zip(&next) {
                assert!(a.abs_diff(*b) <= 1);
            }
        }
    }

    #[test]
    fn thresholds_validated() {
        assert!(HpaConfig::with_threshold(0.9).validate().is_ok());
        assert!(HpaConfig::with_threshold(0.2).validate().is_err());
        assert!(HpaConfig::with_threshold(1.1).validate().is_err());
    }
}
