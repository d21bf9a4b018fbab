use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{io_err, pods_chart, read_json, write_file, write_json, ReportError, RunSummary};
use crate::cluster_sim::SimulationLog;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub policy: String,
    pub pod_minutes: u64,
    pub overload_minutes: u64,
    pub mean_utilization: f64,
    /// Pod-minutes saved relative to the baseline, in percent.
    pub savings_percent: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSummary {
    pub baseline: String,
    pub trace_digest: String,
    pub horizon: usize,
    pub seed: u64,
    pub rows: Vec<ComparisonRow>,
}

/// `(base − candidate) / base × 100`, or 0 for an empty baseline.
pub fn savings_percent(base: u64, candidate: u64) -> f64 {
    if base == 0 {
        0.0
    } else {
        (base as f64 - candidate as f64) / base as f64 * 100.0
    }
}

fn check_same(field: &str, left: String, right: String) -> Result<(), ReportError> {
    if left != right {
        return Err(ReportError::Mismatch {
            field: field.to_string(),
            left,
            right,
        });
    }
    Ok(())
}

fn load_run(dir: &Path) -> Result<(RunSummary, SimulationLog), ReportError> {
    let summary: RunSummary = read_json(&dir.join("summary.json"), "run `phpa simulate` first")?;
    let log_path = dir.join("log.csv");
    let text = std::fs::read_to_string(&log_path).map_err(|e| io_err(&log_path, e))?;
    let log = SimulationLog::from_csv(&text)?;
    if log.summary() != summary.metrics {
        return Err(ReportError::Inconsistent(format!(
            "{}: summary.json does not match log.csv",
            dir.display()
        )));
    }
    Ok((summary, log))
}

fn table(summary: &ComparisonSummary) -> String {
    let width = summary.rows.iter().map(|r| r.policy.len()).max().unwrap_or(6).max(6);
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<width$}  {:>11}  {:>16}  {:>8}  {:>12}",
        "policy", "pod-minutes", "overload-minutes", "mean-util", "savings-%"
    );
    for r in &summary.rows {
        let _ = writeln!(
            out,
            "{:<width$}  {:>11}  {:>16}  {:>9.4}  {:>12.2}",
            r.policy, r.pod_minutes, r.overload_minutes, r.mean_utilization, r.savings_percent
        );
    }
    let _ = writeln!(out, "baseline: {}", summary.baseline);
    out
}

/// Tabulates runs against a baseline (the first run unless named) and plots
/// every policy's pod count per service. Runs must share trace, horizon,
/// seed, startup delay and capacity.
pub fn compare(run_dirs: &[PathBuf], baseline: Option<&str>, out_dir: &Path) -> Result<ComparisonSummary, ReportError> {
    if run_dirs.len() < 2 {
        return Err(ReportError::Config(format!(
            "compare needs at least 2 runs, got {}",
            run_dirs.len()
        )));
    }
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    let (first, first_log) = &runs[0];
    for (s, log) in &runs[1..] {
        check_same("trace_digest", first.trace_digest.clone(), s.trace_digest.clone())?;
        check_same("horizon", first.horizon.to_string(), s.horizon.to_string())?;
        check_same("seed", first.seed.to_string(), s.seed.to_string())?;
        check_same(
            "startup_delay",
            first.startup_delay.to_string(),
            s.startup_delay.to_string(),
        )?;
        check_same("capacity", first.capacity.to_string(), s.capacity.to_string())?;
        check_same("services", first_log.services.join("|"), log.services.join("|"))?;
    }
    let base = match baseline {
        Some(name) => runs
            .iter()
            .find(|(s, _)| s.policy == name)
            .ok_or_else(|| ReportError::Config(format!("baseline '{name}' is not among the runs")))?,
        None => &runs[0],
    };
    let base_pods = base.0.metrics.pod_minutes;
    let summary = ComparisonSummary {
        baseline: base.0.policy.clone(),
        trace_digest: first.trace_digest.clone(),
        horizon: first.horizon,
        seed: first.seed,
        rows: runs
            .iter()
            .map(|(s, _)| ComparisonRow {
                policy: s.policy.clone(),
                pod_minutes: s.metrics.pod_minutes,
                overload_minutes: s.metrics.overload_minutes,
                mean_utilization: s.metrics.mean_utilization,
                savings_percent: savings_percent(base_pods, s.metrics.pod_minutes),
            })
            .collect(),
    };
    write_json(&out_dir.join("comparison.json"), &summary)?;
    write_file(&out_dir.join("comparison.txt"), &table(&summary))?;
    for service in &first_log.services {
        let series: Vec<(String, Vec<u32>)> = runs
            .iter()
            .map(|(s, log)| (s.policy.clone(), log.pods_of(service)))
            .collect();
        write_file(
            &out_dir.join(format!("pods_{service}.svg")),
            &pods_chart(service, first.horizon, &series),
        )?;
    }
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn savings_formula() {
        assert_eq!(savings_percent(1000, 800), 20.0);
        assert_eq!(savings_percent(1000, 1000), 0.0);
        assert_eq!(savings_percent(0, 5), 0.0);
        assert!(savings_percent(100, 150) < 0.0);
    }
}
