use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::WorkloadTrace;
use crate::tensor::Rng;

pub const DIURNAL_PERIOD: f64 = 1440.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Pattern {
    Sine,
    Diurnal,
    Bursty,
}

impl std::str::FromStr for Pattern {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sine" => Ok(Self::Sine),
            "diurnal" => Ok(Self::Diurnal),
            "bursty" => Ok(Self::Bursty),
            other => Err(format!("unknown pattern '{other}' (sine, diurnal, bursty)")),
        }
    }
}

/// Parameters of a synthetic trace. Each bin holds
/// `round(max(0, base + amplitude · (shape(t) + noise · z)))` requests with
/// `shape` in roughly `[0, 1]` and `z` standard normal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub pattern: Pattern,
    /// Number of bins.
    pub length: usize,
    pub base: f64,
    pub amplitude: f64,
    /// Standard deviation of the additive noise, relative to `amplitude`.
    pub noise: f64,
    /// Period in minutes; 60 for sine and 1440 for the other patterns when unset.
    pub period: Option<f64>,
    /// Probability that a burst starts in a given bin (bursty only).
    pub burst_rate: f64,
    /// Minutes per bin.
    pub resolution: u32,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            pattern: Pattern::Diurnal,
            length: 4000,
            base: 100.0,
            amplitude: 1000.0,
            noise: 0.05,
            period: None,
            burst_rate: 0.03,
            resolution: 1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn period(&self) -> f64 {
        self.period.unwrap_or(match self.pattern {
            Pattern::Sine => 60.0,
            Pattern::Diurnal | Pattern::Bursty => DIURNAL_PERIOD,
        })
    }
}

fn diurnal_shape(t: f64, period: f64) -> f64 {
    0.5 - 0.4 * (TAU * t / period).cos() - 0.1 * (2.0 * TAU * t / period).cos()
}

/// Deterministic in `spec`; the trace starts at minute 0.
pub fn generate_synthetic_trace(spec: &SyntheticSpec) -> WorkloadTrace {
    let mut rng = Rng::new(spec.seed);
    let mut bursts = rng.fork(1);
    let period = spec.period();
    let resolution = spec.resolution.max(1);
    // (bins left, height) of active bursts
    let mut active: Vec<(usize, f64)> = Vec::new();
    let counts: Vec<u64> = (0..spec.length)
        .map(|i| {
            let t = (i as u64 * resolution as u64) as f64;
            let shape = match spec.pattern {
                Pattern::Sine => 0.5 + 0.5 * (TAU * t / period).sin(),
                Pattern::Diurnal => diurnal_shape(t, period),
                Pattern::Bursty => {
                    if bursts.unit() < spec.burst_rate {
                        let len = 2 + bursts.below(7);
                        active.push((len, bursts.uniform(0.3, 0.8)));
                    }
                    let extra: f64 = active.iter().map(|&(_, h)| h).sum();
                    active.retain_mut(|b| {
                        b.0 -= 1;
                        b.0 > 0
                    });
                    0.6 * diurnal_shape(t, period) + extra
                }
            };
            let z = rng.standard_normal();
            let value = spec.base + spec.amplitude * (shape + spec.noise * z);
            value.max(0.0).round() as u64
        })
        .collect();
    WorkloadTrace::from_counts(resolution, &counts).expect("regular grid")
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Pearson correlation between the series and itself shifted by `lag`.
    fn autocorrelation(x: &[f64], lag: usize) -> f64 {
        let (a, b) = (&x[..x.len() - lag], &x[lag..]);
        let n = a.len() as f64;
        let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
        let cov: f64 = a.iter().zip(b).map(|(p, q)| (p - ma) * (q - mb)).sum();
        let va: f64 = a.iter().map(|p| (p - ma).powi(2)).sum();
        let vb: f64 = b.iter().map(|q| (q - mb).powi(2)).sum();
        cov / (va * vb).sqrt()
    }

    #[test]
    fn zero_amplitude_is_constant() {
        for pattern in [Pattern::Sine, Pattern::Diurnal, Pattern::Bursty] {
            let spec = SyntheticSpec {
                pattern,
                amplitude: 0.0,
                base: 42.0,
                length: 300,
                ..Default::default()
            };
            assert!(generate_synthetic_trace(&spec).counts().iter().all(|&c| c == 42));
        }
    }

    #[test]
    fn same_seed_same_trace() {
        let spec = SyntheticSpec {
            pattern: Pattern::Bursty,
            length: 500,
            seed: 9,
            ..Default::default()
        };
        assert_eq!(generate_synthetic_trace(&spec), generate_synthetic_trace(&spec));
        let other = SyntheticSpec {
            seed: 10,
            ..spec.clone()
        };
        assert_ne!(generate_synthetic_trace(&spec), generate_synthetic_trace(&other));
    }

    #[test]
    fn diurnal_autocorrelation_peaks_at_one_day() {
        let spec = SyntheticSpec {
            length: 4 * 1440,
            seed: 3,
            ..Default::default()
        };
        let x: Vec<f64> = generate_synthetic_trace(&spec)
            .counts()
            .iter()
            .map(|&c| c as f64)
            .collect();
        let best = (720..=2160)
            .max_by(|&a, &b| autocorrelation(&x, a).total_cmp(&autocorrelation(&x, b)))
            .unwrap();
        assert!((best as i64 - 1440).abs() <= 5, "peak at lag {best}");
    }

    #[test]
    fn bursty_has_excursions_above_diurnal_envelope() {
        let spec = SyntheticSpec {
            pattern: Pattern::Bursty,
            length: 800,
            resolution: 5,
            noise: 0.0,
            base: 0.0,
            amplitude: 100.0,
            ..Default::default()
        };
        let t = generate_synthetic_trace(&spec);
        assert_eq!(t.resolution(), 5);
        assert!(t.counts().iter().any(|&c| c > 60));
    }

    #[test]
    fn pattern_names() {
        assert_eq!("bursty".parse::<Pattern>(), Ok(Pattern::Bursty));
        assert!("square".parse::<Pattern>().is_err());
    }
}
