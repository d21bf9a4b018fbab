use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::autoscaler::{ScalingDecision, ServiceDecision, DECISION_LOG_HEADER};

pub const LOG_HEADER: &str =
    "minute,service,external_rps,service_rps,pods,utilization,overloaded,policy,decision_delta";

#[derive(Debug, Clone, PartialEq)]
pub struct LogRow {
    pub minute: u64,
    pub service: String,
    pub external_rps: f64,
    pub service_rps: f64,
    /// Allocated pods during this minute.
    pub pods: u32,
    pub utilization: f64,
    pub overloaded: bool,
    /// Pods added (+) or removed (−) at the end of this minute.
    pub decision_delta: i64,
}

/// Per-minute record of one simulation run, rows ordered by minute then by
/// service in graph order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulationLog {
    pub policy: String,
    pub services: Vec<String>,
    pub rows: Vec<LogRow>,
    /// Integration decisions, proactive policy only.
    pub decisions: Vec<String>,
    pub capacity_limited_minutes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServiceSummary {
    pub service: String,
    pub pod_minutes: u64,
    pub overload_minutes: u64,
    pub mean_utilization: f64,
    pub peak_pods: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSummary {
    pub policy: String,
    pub minutes: usize,
    pub pod_minutes: u64,
    pub overload_minutes: u64,
    pub mean_utilization: f64,
    pub peak_total_pods: u32,
    pub services: Vec<ServiceSummary>,
}

impl SimulationLog {
    pub fn new(policy: String, services: Vec<String>) -> Self {
        Self {
            policy,
            services,
            rows: Vec::new(),
            decisions: Vec::new(),
            capacity_limited_minutes: 0,
        }
    }

    pub(super) fn push_decisions(&mut self, minute: u64, decisions: &[ServiceDecision]) {
        let d = ScalingDecision {
            services: decisions.to_vec(),
        };
        self.decisions.extend(d.csv_rows(minute, &self.services));
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::with_capacity(80 * (self.rows.len() + 1));
        out.push_str(LOG_HEADER);
        out.push('\n');
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.minute,
                r.service,
                r.external_rps,
                r.service_rps,
                r.pods,
                r.utilization,
                r.overloaded,
                self.policy,
                r.decision_delta
            );
        }
        out
    }

    pub fn decisions_csv(&self) -> String {
        let mut out = String::from(DECISION_LOG_HEADER);
        out.push('\n');
        for line in &self.decisions {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Parses [`to_csv`](Self::to_csv) output. Decisions and capacity counts
    /// are not part of the CSV and come back empty.
    pub fn from_csv(text: &str) -> Result<Self, SimError> {
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, h)) if h == LOG_HEADER => {}
            _ => return Err(SimError::BadLog(format!("missing header '{LOG_HEADER}'"))),
        }
        let mut policy: Option<String> = None;
        let mut services: Vec<String> = Vec::new();
        let mut rows = Vec::new();
        for (idx, line) in lines {
            let bad = |what: &str| SimError::BadLog(format!("line {}: {what}", idx + 1));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 9 {
                return Err(bad("expected 9 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'")));
            let row = LogRow {
                minute: f[0].parse().map_err(|_| bad("bad minute"))?,
                service: f[1].to_string(),
                external_rps: num(f[2])?,
                service_rps: num(f[3])?,
                pods: f[4].parse().map_err(|_| bad("bad pods"))?,
                utilization: num(f[5])?,
                overloaded: f[6].parse().map_err(|_| bad("bad overloaded flag"))?,
                decision_delta: f[8].parse().map_err(|_| bad("bad delta"))?,
            };
            match &policy {
                None => policy = Some(f[7].to_string()),
                Some(p) if p != f[7] => return Err(bad("mixed policies")),
                _ => {}
            }
            if !services.contains(&row.service) {
                services.push(row.service.clone());
            }
            rows.push(row);
        }
        let policy = policy.ok_or_else(|| SimError::BadLog("no rows".into()))?;
        if rows.len() % services.len() != 0 {
            return Err(SimError::BadLog("incomplete final minute".into()));
        }
        Ok(Self {
            policy,
            services,
            rows,
            decisions: Vec::new(),
            capacity_limited_minutes: 0,
        })
    }

    pub fn minutes(&self) -> usize {
        self.rows.len() / self.services.len().max(1)
    }

    /// Allocated pods of `service` over time.
    pub fn pods_of(&self, service: &str) -> Vec<u32> {
        self.rows
            .iter()
            .filter(|r| r.service == service)
            .map(|r| r.pods)
            .collect()
    }

    pub fn summary(&self) -> SimulationSummary {
        let services: Vec<ServiceSummary> = self
            .services
            .iter()
            .map(|s| {
                let rows: Vec<&LogRow> = self.rows.iter().filter(|r| &r.service == s).collect();
                ServiceSummary {
                    service: s.clone(),
                    pod_minutes: rows.iter().map(|r| r.pods as u64).sum(),
                    overload_minutes: rows.iter().filter(|r| r.overloaded).count() as u64,
                    mean_utilization: mean(rows.iter().map(|r| r.utilization)),
                    peak_pods: rows.iter().map(|r| r.pods).max().unwrap_or(0),
                }
            })
            .collect();
        let width = self.services.len().max(1);
        SimulationSummary {
            policy: self.policy.clone(),
            minutes: self.minutes(),
            pod_minutes: self.rows.iter().map(|r| r.pods as u64).sum(),
            overload_minutes: self.rows.iter().filter(|r| r.overloaded).count() as u64,
            mean_utilization: mean(self.rows.iter().map(|r| r.utilization)),
            peak_total_pods: self
                .rows
                .chunks(width)
                .map(|c| c.iter().map(|r| r.pods).sum())
                .max()
                .unwrap_or(0),
            services,
        }
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, count) = values.fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(minute: u64, service: &str, pods: u32, utilization: f64) -> LogRow {
        LogRow {
            minute,
            service: service.into(),
            external_rps: 1.0 / 3.0,
            service_rps: 0.1,
            pods,
            utilization,
            overloaded: utilization > 1.0,
            decision_delta: 0,
        }
    }

    #[test]
    fn csv_round_trip_reproduces_summary() {
        let mut log = SimulationLog::new("reactive-0.70".into(), vec!["a".into(), "b".into()]);
        log.rows = vec![
            row(5, "a", 2, 0.123456789),
            row(5, "b", 1, 1.5),
            row(6, "a", 3, 0.7),
            row(6, "b", 2, 2.0 / 3.0),
        ];
        let back = SimulationLog::from_csv(&log.to_csv()).unwrap();
        assert_eq!(back.rows, log.rows);
        assert_eq!(back.summary(), log.summary());
        let s = log.summary();
        assert_eq!(s.pod_minutes, 8);
        assert_eq!(s.overload_minutes, 1);
        assert_eq!(s.peak_total_pods, 5);
        assert_eq!(s.services[1].peak_pods, 2);
    }

    #[test]
    fn rejects_foreign_csv() {
        assert!(SimulationLog::from_csv("minute,requests\n0,1\n").is_err());
        let text = format!("{LOG_HEADER}\n0,a,1,1,1,0.5,false,x,0\n0,b,1,1,1,0.5,false,y,0\n");
        assert!(SimulationLog::from_csv(&text).is_err());
    }
}
