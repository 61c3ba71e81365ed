//! Run reports, report comparison, and the non-colony baseline allocators.
//!
//! Reports are plain serde structs so runs can be written to JSON, read
//! back, and diffed byte-for-byte; every map inside is ordered.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ants;
use crate::domain::{NodeId, NodeState, RequestId};
use crate::engine::EngineParams;
use crate::power::EnergyMeter;
use crate::world::{Action, AdminReason, LoggedAction, MigrateReason, World};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("reports are not comparable: {0}")]
    NotComparable(String),
}

/// Integrated energy, in joules.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergySummary {
    pub fleet_j: f64,
    pub per_node_j: BTreeMap<NodeId, f64>,
}

/// Service-level outcomes over the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlaSummary {
    /// VM-seconds spent in a critical service band.
    pub violation_vm_seconds: f64,
    /// Per-VM samples taken at the metrics cadence.
    pub observations: u64,
    /// Sample counts keyed by service band code ("0", "11", "12", "21", "22").
    pub slam_histogram: BTreeMap<String, u64>,
}

/// Operation counts, tallied from the action log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OpsSummary {
    pub deployed: u64,
    pub rejected: u64,
    /// Migrations keyed by reason ("critical", "recommended", "consolidation").
    pub migrations: BTreeMap<String, u64>,
    pub clones_created: u64,
    pub clones_removed: u64,
    pub vms_removed: u64,
    pub pointer_advances: u64,
    pub nodes_registered: u64,
    pub node_failures: u64,
    /// Administrator notifications keyed by reason.
    pub admin_notices: BTreeMap<String, u64>,
    pub user_notices: u64,
}

/// Fleet posture over time, sampled at the metrics cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetSummary {
    pub active_node_series: Vec<(f64, u64)>,
    pub fleet_power_series_w: Vec<(f64, f64)>,
    /// Mean of the active-node samples.
    pub avg_active: f64,
    pub peak_active: u64,
    pub final_active: u64,
}

/// Everything measured about one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    pub horizon_s: f64,
    /// Hash of the resolved scenario with the seed zeroed; identifies the
    /// physics of the run independent of seed and policy.
    pub config_sha256: String,
    pub energy: EnergySummary,
    pub sla: SlaSummary,
    pub ops: OpsSummary,
    pub fleet: FleetSummary,
    pub action_log: Vec<LoggedAction>,
}

impl MetricsReport {
    /// Pretty JSON with a trailing newline. Deterministic: all maps are
    /// ordered and float formatting is exact.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report fields are plain data");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

fn migrate_reason_key(reason: MigrateReason) -> &'static str {
    match reason {
        MigrateReason::Critical => "critical",
        MigrateReason::Recommended => "recommended",
        MigrateReason::Consolidation => "consolidation",
    }
}

fn admin_reason_key(reason: AdminReason) -> &'static str {
    match reason {
        AdminReason::ResourceScarcity => "resource_scarcity",
        AdminReason::FewResources => "few_resources",
    }
}

/// Tally the action log into operation counts.
fn summarize_ops(log: &[LoggedAction]) -> OpsSummary {
    let mut ops = OpsSummary {
        deployed: 0,
        rejected: 0,
        migrations: BTreeMap::new(),
        clones_created: 0,
        clones_removed: 0,
        vms_removed: 0,
        pointer_advances: 0,
        nodes_registered: 0,
        node_failures: 0,
        admin_notices: BTreeMap::new(),
        user_notices: 0,
    };
    for entry in log {
        match &entry.action {
            Action::Deploy { .. } => ops.deployed += 1,
            Action::Reject { .. } => ops.rejected += 1,
            Action::AdvancePointer { .. } => ops.pointer_advances += 1,
            Action::Migrate { reason, .. } => {
                *ops.migrations
                    .entry(migrate_reason_key(*reason).to_string())
                    .or_insert(0) += 1;
            }
            Action::CloneVm { .. } => ops.clones_created += 1,
            Action::RemoveClone { .. } => ops.clones_removed += 1,
            Action::RemoveVm { .. } => ops.vms_removed += 1,
            Action::StateChange { .. } => {}
            Action::MarkFailed { .. } => ops.node_failures += 1,
            Action::RegisterNode { .. } => ops.nodes_registered += 1,
            Action::NotifyAdmin { reason } => {
                *ops.admin_notices
                    .entry(admin_reason_key(*reason).to_string())
                    .or_insert(0) += 1;
            }
            Action::NotifyUser { .. } => ops.user_notices += 1,
        }
    }
    ops
}

#[allow(clippy::too_many_arguments)]
pub(crate) fn build_report(
    params: &EngineParams,
    meter: &EnergyMeter,
    violation_vm_seconds: f64,
    observations: u64,
    slam_histogram: &BTreeMap<u8, u64>,
    active_series: &[(f64, u64)],
    power_series: &[(f64, f64)],
    action_log: Vec<LoggedAction>,
) -> MetricsReport {
    let histogram = slam_histogram
        .iter()
        .map(|(code, count)| (code.to_string(), *count))
        .collect();
    let avg_active = if active_series.is_empty() {
        0.0
    } else {
        active_series.iter().map(|(_, n)| *n as f64).sum::<f64>() / active_series.len() as f64
    };
    MetricsReport {
        scenario: params.scenario_name.clone(),
        policy: params.policy.as_str().to_string(),
        seed: params.seed,
        horizon_s: params.horizon_s,
        config_sha256: params.config_sha256.clone(),
        energy: EnergySummary {
            fleet_j: meter.fleet_j,
            per_node_j: meter.per_node.clone(),
        },
        sla: SlaSummary {
            violation_vm_seconds,
            observations,
            slam_histogram: histogram,
        },
        ops: summarize_ops(&action_log),
        fleet: FleetSummary {
            avg_active,
            peak_active: active_series.iter().map(|(_, n)| *n).max().unwrap_or(0),
            final_active: active_series.last().map(|(_, n)| *n).unwrap_or(0),
            active_node_series: active_series.to_vec(),
            fleet_power_series_w: power_series.to_vec(),
        },
        action_log,
    }
}

/// Head-to-head outcome of two runs of the same scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub scenario: String,
    pub seed: u64,
    pub horizon_s: f64,
    pub candidate_policy: String,
    pub baseline_policy: String,
    pub candidate_energy_j: f64,
    pub baseline_energy_j: f64,
    pub energy_saved_j: f64,
    /// Fraction of baseline energy saved; 0 when the baseline used none.
    pub energy_saved_fraction: f64,
    pub candidate_violation_vm_seconds: f64,
    pub baseline_violation_vm_seconds: f64,
    /// True when the candidate used strictly less energy without more
    /// violation time.
    pub candidate_dominates: bool,
}

impl Comparison {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("comparison fields are plain data");
        s.push('\n');
        s
    }
}

/// Compare two runs of the same scenario (same resolved config, seed, and
/// horizon — only the policy may differ).
pub fn compare(candidate: &MetricsReport, baseline: &MetricsReport) -> Result<Comparison, MetricsError> {
    if candidate.config_sha256 != baseline.config_sha256 {
        return Err(MetricsError::NotComparable(
            "different scenario configurations".into(),
        ));
    }
    if candidate.seed != baseline.seed {
        return Err(MetricsError::NotComparable("different seeds".into()));
    }
    if candidate.horizon_s != baseline.horizon_s {
        return Err(MetricsError::NotComparable("different horizons".into()));
    }
    let saved = baseline.energy.fleet_j - candidate.energy.fleet_j;
    let fraction = if baseline.energy.fleet_j > 0.0 {
        saved / baseline.energy.fleet_j
    } else {
        0.0
    };
    Ok(Comparison {
        scenario: candidate.scenario.clone(),
        seed: candidate.seed,
        horizon_s: candidate.horizon_s,
        candidate_policy: candidate.policy.clone(),
        baseline_policy: baseline.policy.clone(),
        candidate_energy_j: candidate.energy.fleet_j,
        baseline_energy_j: baseline.energy.fleet_j,
        energy_saved_j: saved,
        energy_saved_fraction: fraction,
        candidate_violation_vm_seconds: candidate.sla.violation_vm_seconds,
        baseline_violation_vm_seconds: baseline.sla.violation_vm_seconds,
        candidate_dominates: candidate.energy.fleet_j < baseline.energy.fleet_j
            && candidate.sla.violation_vm_seconds <= baseline.sla.violation_vm_seconds,
    })
}

/// Baseline placement: lowest-id live active node that fits, else reject.
pub fn first_fit_allocate(world: &mut World, request: &RequestId) -> Vec<Action> {
    let need = (world.tunables.basic_vm_cpu, world.tunables.basic_vm_mem);
    let mut acts = Vec::new();
    let target = world
        .nodes
        .values()
        .filter(|n| n.registered && n.responsive && n.state == NodeState::Active)
        .find(|n| n.remaining_cpu >= need.0 && n.remaining_mem >= need.1)
        .map(|n| n.id);
    match target {
        Some(node) => ants::deploy(world, request, node, &mut acts),
        None => acts.push(Action::Reject {
            request: request.clone(),
        }),
    }
    acts
}

/// Baseline placement: rotate over live active nodes (ascending id),
/// starting after the previous placement, taking the first that fits.
pub fn round_robin_allocate(
    world: &mut World,
    request: &RequestId,
    cursor: &mut usize,
) -> Vec<Action> {
    let need = (world.tunables.basic_vm_cpu, world.tunables.basic_vm_mem);
    let mut acts = Vec::new();
    let eligible: Vec<NodeId> = world
        .nodes
        .values()
        .filter(|n| n.registered && n.responsive && n.state == NodeState::Active)
        .map(|n| n.id)
        .collect();
    if eligible.is_empty() {
        acts.push(Action::Reject {
            request: request.clone(),
        });
        return acts;
    }
    let len = eligible.len();
    for step in 0..len {
        let idx = (*cursor + step) % len;
        let node = eligible[idx];
        let rec = &world.nodes[&node];
        if rec.remaining_cpu >= need.0 && rec.remaining_mem >= need.1 {
            *cursor = (idx + 1) % len;
            ants::deploy(world, request, node, &mut acts);
            return acts;
        }
    }
    acts.push(Action::Reject {
        request: request.clone(),
    });
    acts
}
