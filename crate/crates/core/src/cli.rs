//! Command-line front end: run scenarios, compare policies, validate
//! inputs. Exit codes: 0 success, 1 failure (bad scenario, I/O, or a
//! comparison that cannot be formed), 2 usage errors (from argument
//! parsing).

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::config::{self, Scenario};
use crate::engine::{Engine, Policy};
use crate::metrics::{self, MetricsReport};
use crate::workload;

#[derive(Debug, Parser)]
#[command(name = "antcloud", version, about = "Agent-managed data center simulator")]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Text,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyArg {
    Ant,
    RoundRobin,
    FirstFit,
}

impl From<PolicyArg> for Policy {
    fn from(p: PolicyArg) -> Policy {
        match p {
            PolicyArg::Ant => Policy::Ant,
            PolicyArg::RoundRobin => Policy::RoundRobin,
            PolicyArg::FirstFit => Policy::FirstFit,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario to its horizon and emit the report.
    Run {
        scenario: PathBuf,
        /// Override the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Override the scenario's policy.
        #[arg(long)]
        policy: Option<PolicyArg>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
        /// Write the report here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a scenario under its own policy and under both baselines, then
    /// report the head-to-head outcomes.
    Compare {
        scenario: PathBuf,
        /// Override the scenario's seed for all three runs.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Parse and validate a scenario file without running it.
    Validate { scenario: PathBuf },
    /// Parse a workload trace file and summarize its series.
    TraceCheck { trace: PathBuf },
}

/// Run a resolved scenario to completion.
pub fn run_scenario(scenario: Scenario) -> MetricsReport {
    Engine::new(scenario.world, scenario.params).run().report
}

fn load_with_overrides(
    path: &Path,
    seed: Option<u64>,
    policy: Option<Policy>,
) -> Result<Scenario, config::ConfigError> {
    let mut scenario = config::load_scenario(path)?;
    if let Some(seed) = seed {
        scenario.params.seed = seed;
    }
    if let Some(policy) = policy {
        scenario.params.policy = policy;
    }
    Ok(scenario)
}

fn render_text(report: &MetricsReport) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("scenario       {}", report.scenario));
    line(format!("policy         {}", report.policy));
    line(format!("seed           {}", report.seed));
    line(format!("horizon        {} s", report.horizon_s));
    line(format!("config         {}", report.config_sha256));
    line(format!("fleet energy   {:.3} J", report.energy.fleet_j));
    line(format!(
        "violations     {:.3} VM-seconds critical over {} samples",
        report.sla.violation_vm_seconds, report.sla.observations
    ));
    let bands = report
        .sla
        .slam_histogram
        .iter()
        .map(|(code, count)| format!("{code}:{count}"))
        .collect::<Vec<_>>()
        .join(" ");
    line(format!("service bands  {}", if bands.is_empty() { "-".into() } else { bands }));
    let migrations: u64 = report.ops.migrations.values().sum();
    line(format!(
        "ops            deployed {} rejected {} migrations {} clones +{}/-{} removed {}",
        report.ops.deployed,
        report.ops.rejected,
        migrations,
        report.ops.clones_created,
        report.ops.clones_removed,
        report.ops.vms_removed
    ));
    line(format!(
        "notices        admin {} user {}",
        report.ops.admin_notices.values().sum::<u64>(),
        report.ops.user_notices
    ));
    line(format!(
        "active nodes   avg {:.2} peak {} final {}",
        report.fleet.avg_active, report.fleet.peak_active, report.fleet.final_active
    ));
    out
}

fn emit(text: String, out: Option<&Path>) -> Result<(), String> {
    match out {
        Some(path) => std::fs::write(path, text).map_err(|e| format!("cannot write {}: {e}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

/// Execute a parsed command line; returns the process exit code.
pub fn run(cli: Cli) -> i32 {
    match execute(cli) {
        Ok(()) => 0,
        Err(message) => {
            eprintln!("error: {message}");
            1
        }
    }
}

fn execute(cli: Cli) -> Result<(), String> {
    match cli.command {
        Command::Run {
            scenario,
            seed,
            policy,
            format,
            out,
        } => {
            let scenario = load_with_overrides(&scenario, seed, policy.map(Policy::from))
                .map_err(|e| e.to_string())?;
            let report = run_scenario(scenario);
            let text = match format {
                Format::Json => report.to_json(),
                Format::Text => render_text(&report),
            };
            emit(text, out.as_deref())
        }
        Command::Compare { scenario, seed, format } => {
            let candidate = load_with_overrides(&scenario, seed, None).map_err(|e| e.to_string())?;
            let mut runs = Vec::new();
            for baseline in [Policy::RoundRobin, Policy::FirstFit] {
                let mut b = load_with_overrides(&scenario, seed, Some(baseline))
                    .map_err(|e| e.to_string())?;
                b.params.seed = candidate.params.seed;
                runs.push((baseline, run_scenario(b)));
            }
            let candidate_report = run_scenario(candidate);
            let mut text = String::new();
            for (baseline, baseline_report) in &runs {
                let cmp = metrics::compare(&candidate_report, baseline_report)
                    .map_err(|e| e.to_string())?;
                match format {
                    Format::Json => text.push_str(&cmp.to_json()),
                    Format::Text => {
                        text.push_str(&format!(
                            "vs {:<12} energy {:.3} J -> {:.3} J ({:+.1}%), violations {:.3} -> {:.3} VM-s, dominates: {}\n",
                            baseline.as_str(),
                            cmp.baseline_energy_j,
                            cmp.candidate_energy_j,
                            -cmp.energy_saved_fraction * 100.0,
                            cmp.baseline_violation_vm_seconds,
                            cmp.candidate_violation_vm_seconds,
                            cmp.candidate_dominates
                        ));
                    }
                }
            }
            emit(text, None)
        }
        Command::Validate { scenario } => {
            let sc = config::load_scenario(&scenario).map_err(|e| e.to_string())?;
            println!(
                "ok: {} ({} nodes, {} requests, {} workloads, config {})",
                sc.params.scenario_name,
                sc.world.nodes.len(),
                sc.world.requests.len(),
                sc.world.workloads.len(),
                sc.params.config_sha256
            );
            Ok(())
        }
        Command::TraceCheck { trace } => {
            let text = std::fs::read_to_string(&trace)
                .map_err(|e| format!("cannot read {}: {e}", trace.display()))?;
            let traces = workload::parse_trace(&text).map_err(|e| e.to_string())?;
            for (name, trace) in &traces {
                let bps = trace.breakpoints();
                let last = bps.last().expect("traces are non-empty");
                println!(
                    "{name}: {} breakpoints, t in [0, {}], final rate {} demand {}",
                    bps.len(),
                    last.t,
                    last.rate,
                    last.demand
                );
            }
            Ok(())
        }
    }
}
