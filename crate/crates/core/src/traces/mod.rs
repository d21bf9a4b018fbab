//! Workload traces: CSV ingestion, rescaling, 5-minute to 1-minute replay
//! preparation, chronological dataset splits and synthetic generators.

mod synthetic;

use std::fmt::Write as _;
use std::path::Path;

use thiserror::Error;

pub use synthetic::{generate_synthetic_trace, Pattern, SyntheticSpec, DIURNAL_PERIOD};

pub const CSV_HEADER: &str = "minute,requests";

#[derive(Debug, Error, PartialEq)]
pub enum TraceError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: negative request count {value}")]
    NegativeCount { line: usize, value: i64 },
    #[error("gap between minute {previous} and minute {next} (expected {expected})")]
    Gap { previous: u64, next: u64, expected: u64 },
    #[error("trace is empty")]
    Empty,
    #[error("resolution must be >= 1 minute")]
    ZeroResolution,
    #[error("expected a {expected}-minute trace, got resolution {got}")]
    Resolution { expected: u32, got: u32 },
    #[error("cannot rescale a trace whose bins are all zero")]
    AllZero,
    #[error("target peak must be positive and finite, got {0}")]
    BadTarget(f64),
    #[error("need at least 5 samples to split, got {0}")]
    TooShort(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TraceBin {
    pub minute: u64,
    pub requests: u64,
}

/// Request counts on a regular grid of `resolution`-minute bins.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WorkloadTrace {
    resolution: u32,
    bins: Vec<TraceBin>,
}

impl WorkloadTrace {
    /// Bins must start anywhere and advance by exactly `resolution` minutes.
    pub fn new(resolution: u32, bins: Vec<TraceBin>) -> Result<Self, TraceError> {
        if resolution == 0 {
            return Err(TraceError::ZeroResolution);
        }
        for pair in bins.windows(2) {
            let expected = pair[0].minute + resolution as u64;
            if pair[1].minute != expected {
                return Err(TraceError::Gap {
                    previous: pair[0].minute,
                    next: pair[1].minute,
                    expected,
                });
            }
        }
        Ok(Self { resolution, bins })
    }

    /// Consecutive counts starting at minute 0.
    pub fn from_counts(resolution: u32, counts: &[u64]) -> Result<Self, TraceError> {
        let bins = counts
            .iter()
            .enumerate()
            .map(|(i, &requests)| TraceBin {
                minute: i as u64 * resolution as u64,
                requests,
            })
            .collect();
        Self::new(resolution, bins)
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn bins(&self) -> &[TraceBin] {
        &self.bins
    }

    pub fn counts(&self) -> Vec<u64> {
        self.bins.iter().map(|b| b.requests).collect()
    }

    pub fn len(&self) -> usize {
        self.bins.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bins.is_empty()
    }

    pub fn total(&self) -> u128 {
        self.bins.iter().map(|b| b.requests as u128).sum()
    }

    /// Last `len` bins.
    pub fn tail(&self, len: usize) -> WorkloadTrace {
        let start = self.bins.len().saturating_sub(len);
        WorkloadTrace {
            resolution: self.resolution,
            bins: self.bins[start..].to_vec(),
        }
    }

    /// Requests per second of each bin, spread evenly over the bin.
    pub fn external_rps(&self) -> Vec<f64> {
        let seconds = 60.0 * self.resolution as f64;
        self.bins.iter().map(|b| b.requests as f64 / seconds).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(16 * (self.bins.len() + 1));
        out.push_str(CSV_HEADER);
        out.push('\n');
        for b in &self.bins {
            let _ = writeln!(out, "{},{}", b.minute, b.requests);
        }
        out
    }

    pub fn parse_csv(text: &str, resolution: u32) -> Result<Self, TraceError> {
        let mut lines = text.split('\n').enumerate();
        match lines.next() {
            Some((_, h)) if h.trim_end_matches('\r') == CSV_HEADER => {}
            Some((_, h)) => {
                return Err(TraceError::Parse {
                    line: 1,
                    message: format!("expected header '{CSV_HEADER}', found '{h}'"),
                })
            }
            None => return Err(TraceError::Empty),
        }
        let mut bins = Vec::new();
        for (idx, raw) in lines {
            let line = idx + 1;
            let row = raw.trim_end_matches('\r');
            if row.is_empty() {
                continue;
            }
            let mut fields = row.split(',');
            let (Some(m), Some(r), None) = (fields.next(), fields.next(), fields.next()) else {
                return Err(TraceError::Parse {
                    line,
                    message: format!("expected 2 fields in '{row}'"),
                });
            };
            let minute: u64 = m.trim().parse().map_err(|e| TraceError::Parse {
                line,
                message: format!("bad minute '{m}': {e}"),
            })?;
            let requests: i64 = r.trim().parse().map_err(|e| TraceError::Parse {
                line,
                message: format!("bad request count '{r}': {e}"),
            })?;
            if requests < 0 {
                return Err(TraceError::NegativeCount { line, value: requests });
            }
            bins.push(TraceBin {
                minute,
                requests: requests as u64,
            });
        }
        Self::new(resolution, bins)
    }

    pub fn save(&self, path: &Path) -> Result<(), TraceError> {
        std::fs::write(path, self.to_csv()).map_err(|e| io_error(path, e))
    }
}

fn io_error(path: &Path, e: std::io::Error) -> TraceError {
    TraceError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

pub fn load_trace(path: &Path, resolution: u32) -> Result<WorkloadTrace, TraceError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_error(path, e))?;
    WorkloadTrace::parse_csv(&text, resolution)
}

/// Spreads each 5-minute bin over its five minutes.
///
/// Minute weights follow a linear ramp through the midpoints of the
/// neighbouring bins (a missing neighbour counts as equal to the bin itself),
/// and the bin's count is apportioned to the weights by largest remainder,
/// ties going to the earlier minute. Every source bin's total is preserved.
pub fn interpolate_to_minutes(trace: &WorkloadTrace) -> Result<WorkloadTrace, TraceError> {
    if trace.resolution != 5 {
        return Err(TraceError::Resolution {
            expected: 5,
            got: trace.resolution,
        });
    }
    let counts = trace.counts();
    let mut bins = Vec::with_capacity(5 * counts.len());
    for (j, bin) in trace.bins.iter().enumerate() {
        let here = counts[j] as u128;
        let prev = if j > 0 { counts[j - 1] as u128 } else { here };
        let next = counts.get(j + 1).map_or(here, |&c| c as u128);
        // ramp value at minute o, times 5; the bin midpoint is o = 2
        let weights: [u128; 5] = std::array::from_fn(|o| {
            let o = o as u128;
            if o <= 2 {
                prev * (2 - o) + here * (o + 3)
            } else {
                here * (7 - o) + next * (o - 2)
            }
        });
        for (o, requests) in apportion(counts[j], &weights).into_iter().enumerate() {
            bins.push(TraceBin {
                minute: bin.minute + o as u64,
                requests,
            });
        }
    }
    WorkloadTrace::new(1, bins)
}

/// Integer split of `total` proportional to `weights` (largest remainder).
fn apportion(total: u64, weights: &[u128; 5]) -> [u64; 5] {
    let sum: u128 = weights.iter().sum();
    if total == 0 || sum == 0 {
        let mut even = [total / 5; 5];
        for slot in even.iter_mut().take((total % 5) as usize) {
            *slot += 1;
        }
        return even;
    }
    let t = total as u128;
    let mut out = [0u64; 5];
    let mut remainders = [(0u128, 0usize); 5];
    let mut assigned = 0u128;
    for (o, &w) in weights.iter().enumerate() {
        let q = t * w;
        out[o] = (q / sum) as u64;
        assigned += q / sum;
        remainders[o] = (q % sum, o);
    }
    // largest remainder first, earlier minute on ties
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, o) in remainders.iter().take((t - assigned) as usize) {
        out[o] += 1;
    }
    out
}

/// Linear rescale so that the largest bin becomes `round(target_peak)`.
/// Each count maps to `round(c · peak / max)`, computed exactly in integers.
pub fn rescale_trace(trace: &WorkloadTrace, target_peak: f64) -> Result<WorkloadTrace, TraceError> {
    if !(target_peak > 0.0 && target_peak.is_finite()) {
        return Err(TraceError::BadTarget(target_peak));
    }
    let max = trace.bins.iter().map(|b| b.requests).max().ok_or(TraceError::Empty)?;
    if max == 0 {
        return Err(TraceError::AllZero);
    }
    let peak = target_peak.round() as u128;
    let max = max as u128;
    let bins = trace
        .bins
        .iter()
        .map(|b| TraceBin {
            minute: b.minute,
            requests: ((2 * b.requests as u128 * peak + max) / (2 * max)) as u64,
        })
        .collect();
    Ok(WorkloadTrace {
        resolution: trace.resolution,
        bins,
    })
}

/// Train, validation and test parts of a chronological split.
pub type Split<'a, T> = (&'a [T], &'a [T], &'a [T]);

/// Chronological 60/20/20 split with sizes `⌊0.6n⌋`, `⌊0.2n⌋` and the rest.
pub fn split_dataset<T>(samples: &[T]) -> Result<Split<'_, T>, TraceError> {
    let n = samples.len();
    if n < 5 {
        return Err(TraceError::TooShort(n));
    }
    let train = 6 * n / 10;
    let valid = 2 * n / 10;
    let (a, rest) = samples.split_at(train);
    let (b, c) = rest.split_at(valid);
    Ok((a, b, c))
}
