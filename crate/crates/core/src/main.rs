use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use graph_phpa::cli_report::{
    compare, gen_trace, simulate, train_resource, train_workload, Experiment, ExperimentConfig, PolicyChoice,
};
use graph_phpa::traces::{Pattern, SyntheticSpec};

/// Proactive vs reactive pod autoscaling on a simulated microservice cluster.
#[derive(Parser)]
#[command(name = "phpa", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyName {
    Reactive,
    GraphPhpa,
}

#[derive(Subcommand)]
enum Command {
    /// Train one workload forecaster per service.
    TrainWorkload(Common),
    /// Train the graph resource model from the forecasters' outputs.
    TrainResource(Common),
    /// Simulate a policy over the test horizon.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        policy: PolicyName,
        /// Scale-out threshold of the reactive policy; all configured thresholds when omitted.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Compare simulation runs and plot pods over time.
    Compare {
        /// Config whose output directory holds the runs.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory; also where runs are looked up when none are given.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Policy name of the baseline run; the first run when omitted.
        #[arg(long)]
        baseline: Option<String>,
        /// Run directories; every directory under `<out>/runs` when omitted.
        runs: Vec<PathBuf>,
    },
    /// Write a synthetic `minute,requests` trace.
    GenTrace {
        #[arg(long, default_value = "diurnal")]
        pattern: Pattern,
        #[arg(long, default_value_t = 4000)]
        length: usize,
        #[arg(long, default_value_t = 100.0)]
        base: f64,
        #[arg(long, default_value_t = 1000.0)]
        amplitude: f64,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        /// Period in minutes.
        #[arg(long)]
        period: Option<f64>,
        #[arg(long, default_value_t = 0.03)]
        burst_rate: f64,
        /// Minutes per bin.
        #[arg(long, default_value_t = 1)]
        resolution: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
    },
}

fn experiment(common: &Common) -> Result<Experiment> {
    let config = ExperimentConfig::load(&common.config)?.with_overrides(common.seed, common.out.clone());
    Ok(Experiment::prepare(config)?)
}

fn run_dirs(out: &Path) -> Result<Vec<PathBuf>> {
    let runs = out.join("runs");
    let mut dirs: Vec<PathBuf> = std::fs::read_dir(&runs)
        .with_context(|| format!("listing {}", runs.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("summary.json").is_file())
        .collect();
    dirs.sort();
    Ok(dirs)
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("PHPA_LOG", "info")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::TrainWorkload(common) => {
            let m = train_workload(&experiment(&common)?)?;
            for s in &m.services {
                println!(
                    "{}: test mse {:.6} (persistence {:.6})",
                    s.service, s.lstm.test.mse, s.persistence_test.mse
                );
            }
        }
        Command::TrainResource(common) => {
            let m = train_resource(&experiment(&common)?)?;
            println!("train mse {:.6}, test mse {:.6}", m.gcn.train.mse, m.gcn.test.mse);
        }
        Command::Simulate {
            common,
            policy,
            threshold,
        } => {
            let choice = match (policy, threshold) {
                (PolicyName::Reactive, t) => PolicyChoice::Reactive { threshold: t },
                (PolicyName::GraphPhpa, None) => PolicyChoice::GraphPhpa,
                (PolicyName::GraphPhpa, Some(_)) => bail!("--threshold applies to the reactive policy only"),
            };
            for s in simulate(&experiment(&common)?, choice)? {
                println!(
                    "{}: {} pod-minutes, {} overload-minutes",
                    s.policy, s.metrics.pod_minutes, s.metrics.overload_minutes
                );
            }
        }
        Command::Compare {
            config,
            out,
            baseline,
            runs,
        } => {
            let out_dir = match (out, &config) {
                (Some(o), _) => o,
                (None, Some(c)) => ExperimentConfig::load(c)?.out_dir,
                (None, None) => bail!("compare needs --out or --config"),
            };
            let runs = if runs.is_empty() { run_dirs(&out_dir)? } else { runs };
            let summary = compare(&runs, baseline.as_deref(), &out_dir)?;
            for r in &summary.rows {
                println!(
                    "{}: {} pod-minutes, savings {:.2}%",
                    r.policy, r.pod_minutes, r.savings_percent
                );
            }
        }
        Command::GenTrace {
            pattern,
            length,
            base,
            amplitude,
            noise,
            period,
            burst_rate,
            resolution,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                pattern,
                length,
                base,
                amplitude,
                noise,
                period,
                burst_rate,
                resolution,
                seed,
            };
            gen_trace(&spec, &out)?;
        }
    }
    Ok(())
}
