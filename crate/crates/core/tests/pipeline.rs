//! Train/simulate pipeline on the small sine config, through the library and
//! through the `phpa` binary.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::OnceLock;

use graph_phpa::cli_report::{
    load_policy_models, simulate, train_resource, train_workload, Experiment, ExperimentConfig, PolicyChoice,
    ResourceMetrics, RunSummary,
};
use graph_phpa::cluster_sim::{run_simulation, DemandModel, HpaConfig, Policy, SimSettings, SimulationLog};
use graph_phpa::traces::WorkloadTrace;
use tempfile::TempDir;

fn smoke_config() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs/smoke.json")
}

struct Trained {
    _dir: TempDir,
    exp: Experiment,
    resource: ResourceMetrics,
}

/// Smoke models, trained once per test binary.
fn trained() -> &'static Trained {
    static CELL: OnceLock<Trained> = OnceLock::new();
    CELL.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let config = ExperimentConfig::load(&smoke_config())
            .unwrap()
            .with_overrides(None, Some(dir.path().to_path_buf()));
        let exp = Experiment::prepare(config).unwrap();
        train_workload(&exp).unwrap();
        let resource = train_resource(&exp).unwrap();
        Trained {
            _dir: dir,
            exp,
            resource,
        }
    })
}

fn phpa(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_phpa"))
        .args(args)
        .env("PHPA_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn cli_train_workload_writes_one_model_per_service() {
    let dir = tempfile::tempdir().unwrap();
    let out = phpa(&[
        "train-workload",
        "--config",
        smoke_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for s in ["productpage", "details", "reviews", "ratings"] {
        assert!(dir.path().join(format!("models/lstm_{s}.json")).is_file(), "{s}");
    }
    assert!(dir.path().join("workload_metrics.json").is_file());
}

#[test]
fn cli_train_resource_without_forecasters_names_the_missing_step() {
    let dir = tempfile::tempdir().unwrap();
    let out = phpa(&[
        "train-resource",
        "--config",
        smoke_config().to_str().unwrap(),
        "--out",
        dir.path().to_str().unwrap(),
    ]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("train-workload"), "{err}");
}

#[test]
fn cli_rejects_unknown_config_fields() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("c.json");
    std::fs::write(&path, r#"{"horizon": 10, "hozizon": 5}"#).unwrap();
    let out = phpa(&["simulate", "--config", path.to_str().unwrap(), "--policy", "reactive"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("hozizon"));
}

#[test]
fn resource_metrics_cover_every_service() {
    let t = trained();
    let names: Vec<&str> = t
        .resource
        .per_node_test_mse
        .iter()
        .map(|n| n.service.as_str())
        .collect();
    assert_eq!(names, ["productpage", "details", "reviews", "ratings"]);
    assert!(t.resource.per_node_test_mse.iter().all(|n| n.mse.is_finite()));
    assert!(t.resource.gcn.test.mse.is_finite());
}

#[test]
fn summary_json_matches_log_csv() {
    let t = trained();
    let runs = simulate(&t.exp, PolicyChoice::Reactive { threshold: Some(0.8) }).unwrap();
    assert_eq!(runs.len(), 1);
    let dir = t.exp.config.runs_dir().join("reactive-0.80");
    let log = SimulationLog::from_csv(&std::fs::read_to_string(dir.join("log.csv")).unwrap()).unwrap();
    let summary: RunSummary =
        serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary, runs[0]);
    assert_eq!(log.summary(), summary.metrics);
    assert_eq!(log.minutes(), t.exp.config.horizon);
    let pod_minutes: u64 = log.rows.iter().map(|r| r.pods as u64).sum();
    assert_eq!(pod_minutes, summary.metrics.pod_minutes);
    let overloads = log.rows.iter().filter(|r| r.overloaded).count() as u64;
    assert_eq!(overloads, summary.metrics.overload_minutes);
}

fn noise_free(exp: &Experiment) -> DemandModel {
    DemandModel {
        noise_sigma: 0.0,
        ..exp.demand.clone()
    }
}

#[test]
fn constant_workload_reaches_a_fixed_point() {
    let t = trained();
    let models = load_policy_models(&t.exp).unwrap();
    let trace = WorkloadTrace::from_counts(1, &vec![1200; 200]).unwrap();
    let settings = SimSettings::new(100, t.exp.bounds.clone());
    let log = run_simulation(
        &t.exp.graph,
        &trace,
        &Policy::GraphPhpa(Box::new(models)),
        &noise_free(&t.exp),
        &settings,
    )
    .unwrap();
    for s in &log.services {
        let pods = log.pods_of(s);
        assert!(pods[10..].iter().all(|&p| p == pods[10]), "{s}: {pods:?}");
    }
}

fn first_scale_out(log: &SimulationLog, service: &str) -> Option<u64> {
    log.rows
        .iter()
        .find(|r| r.service == service && r.decision_delta > 0)
        .map(|r| r.minute)
}

#[test]
fn proactive_policy_scales_out_no_later_than_reactive_on_a_ramp() {
    let t = trained();
    // flat, then a steady climb inside the range the models were trained on
    let counts: Vec<u64> = (0..200u64)
        .map(|m| if m < 100 { 300 } else { 300 + (m - 100) * 18 })
        .collect();
    let trace = WorkloadTrace::from_counts(1, &counts).unwrap();
    let settings = SimSettings::new(110, t.exp.bounds.clone());
    let demand = noise_free(&t.exp);
    let run = |policy: &Policy| run_simulation(&t.exp.graph, &trace, policy, &demand, &settings).unwrap();
    let proactive = run(&Policy::GraphPhpa(Box::new(load_policy_models(&t.exp).unwrap())));
    let reactive = run(&Policy::Reactive(HpaConfig::default()));
    let service = "productpage";
    let r = first_scale_out(&reactive, service).expect("reactive scales out on the ramp");
    let p = first_scale_out(&proactive, service).expect("proactive scales out on the ramp");
    assert!(p <= r, "proactive at {p}, reactive at {r}");
}
