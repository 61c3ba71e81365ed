//! Scenario files: a TOML schema describing the fleet, the offered
//! workloads, the service requests, scripted faults, and every behavior
//! knob. A file resolves into a [`World`] plus [`EngineParams`], along with
//! a SHA-256 identity hash computed over the fully resolved scenario with
//! the seed zeroed — two files that resolve to the same physics hash the
//! same, regardless of seed or policy.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ants::AntKind;
use crate::domain::{
    DomainError, NodeId, NodeRecord, NodeState, PowerProfile, RequestId, ServiceRequest,
    SortWeights,
};
use crate::engine::{AntSchedule, EngineParams, FaultSpec, JoinSpec, Policy};
use crate::sla::{SlaError, SlamThresholds};
use crate::workload::{self, Breakpoint, WorkloadError, WorkloadTrace};
use crate::world::{Tunables, World};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("workload {name}: {source}")]
    Workload {
        name: String,
        source: WorkloadError,
    },
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Sla(#[from] SlaError),
}

fn invalid(msg: impl Into<String>) -> ConfigError {
    ConfigError::Invalid(msg.into())
}

/// A scenario ready to run.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub world: World,
    pub params: EngineParams,
}

// ---------------------------------------------------------------------------
// Raw file schema.

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    scenario: RawScenario,
    #[serde(default)]
    tunables: RawTunables,
    #[serde(default)]
    ants: RawAnts,
    #[serde(default)]
    nodes: Vec<RawNode>,
    #[serde(default)]
    requests: Vec<RawRequest>,
    #[serde(default)]
    workloads: Vec<RawWorkload>,
    #[serde(default)]
    faults: Vec<RawFault>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    name: String,
    #[serde(default)]
    seed: u64,
    horizon_s: f64,
    #[serde(default = "default_policy")]
    policy: String,
    #[serde(default = "default_sample_interval")]
    sample_interval_s: f64,
}

fn default_policy() -> String {
    "ant".to_string()
}

fn default_sample_interval() -> f64 {
    60.0
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTunables {
    basic_vm_cpu: Option<f64>,
    basic_vm_mem: Option<f64>,
    sort_weight_ppw: Option<f64>,
    sort_weight_mpw: Option<f64>,
    slam_rtime_ok: Option<f64>,
    slam_rtime_critical: Option<f64>,
    slam_thput_critical: Option<f64>,
    slam_thput_ok: Option<f64>,
    saturation_rtime_s: Option<f64>,
    overload_util: Option<f64>,
    consolidate_util: Option<f64>,
    migrate_headroom: Option<f64>,
    clone_fraction: Option<f64>,
    clone_floor: Option<f64>,
    perf_excess_rtime: Option<f64>,
    perf_excess_thput: Option<f64>,
    nil_epsilon: Option<f64>,
    warm_pool_size: Option<usize>,
    failure_timeout_s: Option<f64>,
    lease_warning_window_s: Option<f64>,
    migration_latency_s: Option<f64>,
    util_desired: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnts {
    tester: Option<RawAnt>,
    cleaner: Option<RawAnt>,
    scout: Option<RawAnt>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawAnt {
    population: Option<usize>,
    hop_interval_s: Option<f64>,
    spawn_period_s: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNode {
    id: u64,
    cpu_capacity: f64,
    mem_capacity: f64,
    #[serde(default)]
    neighbors: Vec<u64>,
    power: PowerProfile,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawRequest {
    id: String,
    #[serde(default)]
    arrival_s: f64,
    rtime_target_s: f64,
    thput_target: f64,
    lease_s: f64,
    #[serde(default)]
    app: String,
    #[serde(default)]
    os: String,
    workload: String,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawWorkload {
    name: String,
    kind: String,
    // constant
    rate: Option<f64>,
    // constant / step / diurnal
    demand: Option<f64>,
    // step
    base_rate: Option<f64>,
    step_rate: Option<f64>,
    at_s: Option<f64>,
    // diurnal
    mean_rate: Option<f64>,
    amplitude: Option<f64>,
    period_s: Option<f64>,
    resolution_s: Option<f64>,
    // trace
    file: Option<String>,
    points: Option<Vec<[f64; 3]>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFault {
    kind: String,
    at_s: f64,
    // node_fail
    node: Option<u64>,
    // node_join
    id: Option<u64>,
    cpu_capacity: Option<f64>,
    mem_capacity: Option<f64>,
    #[serde(default)]
    neighbors: Vec<u64>,
    power: Option<PowerProfile>,
}

// ---------------------------------------------------------------------------
// Resolution.

fn require(name: &str, field: &str, value: Option<f64>) -> Result<f64, ConfigError> {
    value.ok_or_else(|| invalid(format!("workload {name}: kind requires `{field}`")))
}

fn resolve_workload(
    raw: &RawWorkload,
    horizon_s: f64,
    base_dir: Option<&Path>,
) -> Result<WorkloadTrace, ConfigError> {
    let name = &raw.name;
    let wrap = |source: WorkloadError| ConfigError::Workload {
        name: name.clone(),
        source,
    };
    match raw.kind.as_str() {
        "constant" => WorkloadTrace::constant(
            require(name, "rate", raw.rate)?,
            require(name, "demand", raw.demand)?,
        )
        .map_err(wrap),
        "step" => WorkloadTrace::step(
            require(name, "base_rate", raw.base_rate)?,
            require(name, "step_rate", raw.step_rate)?,
            require(name, "at_s", raw.at_s)?,
            require(name, "demand", raw.demand)?,
        )
        .map_err(wrap),
        "diurnal" => WorkloadTrace::diurnal(
            require(name, "mean_rate", raw.mean_rate)?,
            require(name, "amplitude", raw.amplitude)?,
            require(name, "period_s", raw.period_s)?,
            require(name, "resolution_s", raw.resolution_s)?,
            horizon_s,
            require(name, "demand", raw.demand)?,
        )
        .map_err(wrap),
        "trace" => {
            if let Some(points) = &raw.points {
                let breakpoints = points
                    .iter()
                    .map(|[t, rate, demand]| Breakpoint {
                        t: *t,
                        rate: *rate,
                        demand: *demand,
                    })
                    .collect();
                return WorkloadTrace::new(breakpoints).map_err(wrap);
            }
            let Some(file) = &raw.file else {
                return Err(invalid(format!(
                    "workload {name}: trace kind requires `points` or `file`"
                )));
            };
            let path = match base_dir {
                Some(dir) => dir.join(file),
                None => PathBuf::from(file),
            };
            let text = std::fs::read_to_string(&path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            let mut traces = workload::parse_trace(&text).map_err(wrap)?;
            traces
                .remove(name)
                .ok_or_else(|| invalid(format!("trace file {} has no series {name}", path.display())))
        }
        other => Err(invalid(format!("workload {name}: unknown kind `{other}`"))),
    }
}

fn resolve_tunables(raw: &RawTunables) -> Result<Tunables, ConfigError> {
    let d = Tunables::default();
    let t = Tunables {
        basic_vm_cpu: raw.basic_vm_cpu.unwrap_or(d.basic_vm_cpu),
        basic_vm_mem: raw.basic_vm_mem.unwrap_or(d.basic_vm_mem),
        sort_weights: SortWeights {
            ppw: raw.sort_weight_ppw.unwrap_or(d.sort_weights.ppw),
            mpw: raw.sort_weight_mpw.unwrap_or(d.sort_weights.mpw),
        },
        slam: SlamThresholds {
            rtime_ok: raw.slam_rtime_ok.unwrap_or(d.slam.rtime_ok),
            rtime_critical: raw.slam_rtime_critical.unwrap_or(d.slam.rtime_critical),
            thput_critical: raw.slam_thput_critical.unwrap_or(d.slam.thput_critical),
            thput_ok: raw.slam_thput_ok.unwrap_or(d.slam.thput_ok),
        },
        saturation_rtime: raw.saturation_rtime_s.unwrap_or(d.saturation_rtime),
        overload_util: raw.overload_util.unwrap_or(d.overload_util),
        consolidate_util: raw.consolidate_util.unwrap_or(d.consolidate_util),
        migrate_headroom: raw.migrate_headroom.unwrap_or(d.migrate_headroom),
        clone_fraction: raw.clone_fraction.unwrap_or(d.clone_fraction),
        clone_floor: raw.clone_floor.unwrap_or(d.clone_floor),
        perf_excess_rtime: raw.perf_excess_rtime.unwrap_or(d.perf_excess_rtime),
        perf_excess_thput: raw.perf_excess_thput.unwrap_or(d.perf_excess_thput),
        nil_epsilon: raw.nil_epsilon.unwrap_or(d.nil_epsilon),
        warm_pool_size: raw.warm_pool_size.unwrap_or(d.warm_pool_size),
        failure_timeout: raw.failure_timeout_s.unwrap_or(d.failure_timeout),
        lease_warning_window: raw.lease_warning_window_s.unwrap_or(d.lease_warning_window),
        migration_latency: raw.migration_latency_s.unwrap_or(d.migration_latency),
        util_desired: raw.util_desired.unwrap_or(d.util_desired),
    };
    t.slam.validate()?;
    let pos = |name: &str, v: f64| {
        if v.is_finite() && v > 0.0 {
            Ok(())
        } else {
            Err(invalid(format!("tunable {name} must be positive, got {v}")))
        }
    };
    pos("basic_vm_cpu", t.basic_vm_cpu)?;
    pos("basic_vm_mem", t.basic_vm_mem)?;
    pos("saturation_rtime_s", t.saturation_rtime)?;
    pos("clone_floor", t.clone_floor)?;
    pos("failure_timeout_s", t.failure_timeout)?;
    if !(t.sort_weights.ppw >= 0.0 && t.sort_weights.mpw >= 0.0)
        || t.sort_weights.ppw + t.sort_weights.mpw <= 0.0
    {
        return Err(invalid("sort weights must be non-negative and not both zero"));
    }
    if !(0.0 < t.overload_util && t.overload_util <= 1.0) {
        return Err(invalid(format!(
            "overload_util must be in (0, 1], got {}",
            t.overload_util
        )));
    }
    if !(0.0 < t.consolidate_util && t.consolidate_util < 1.0) {
        return Err(invalid(format!(
            "consolidate_util must be in (0, 1), got {}",
            t.consolidate_util
        )));
    }
    if !(0.0 < t.clone_fraction && t.clone_fraction <= 1.0) {
        return Err(invalid(format!(
            "clone_fraction must be in (0, 1], got {}",
            t.clone_fraction
        )));
    }
    if t.migrate_headroom < 1.0 || !t.migrate_headroom.is_finite() {
        return Err(invalid(format!(
            "migrate_headroom must be at least 1, got {}",
            t.migrate_headroom
        )));
    }
    if t.migration_latency < 0.0 || !t.migration_latency.is_finite() {
        return Err(invalid(format!(
            "migration_latency_s must be non-negative, got {}",
            t.migration_latency
        )));
    }
    Ok(t)
}

/// Per-kind schedule defaults: testers sweep fastest, cleaners at half that
/// pace, scouts slowest.
fn default_schedule(kind: AntKind) -> AntSchedule {
    let hop_interval_s = match kind {
        AntKind::Tester => 15.0,
        AntKind::Cleaner => 30.0,
        AntKind::Scout => 60.0,
    };
    AntSchedule {
        population: 1,
        hop_interval_s,
        spawn_period_s: 60.0,
    }
}

fn resolve_ant(kind: AntKind, raw: Option<&RawAnt>) -> Result<AntSchedule, ConfigError> {
    let d = default_schedule(kind);
    let s = match raw {
        None => d,
        Some(raw) => AntSchedule {
            population: raw.population.unwrap_or(d.population),
            hop_interval_s: raw.hop_interval_s.unwrap_or(d.hop_interval_s),
            spawn_period_s: raw.spawn_period_s.unwrap_or(d.spawn_period_s),
        },
    };
    if !(s.hop_interval_s.is_finite() && s.hop_interval_s > 0.0) {
        return Err(invalid(format!("{kind:?} hop_interval_s must be positive")));
    }
    if !(s.spawn_period_s.is_finite() && s.spawn_period_s > 0.0) {
        return Err(invalid(format!("{kind:?} spawn_period_s must be positive")));
    }
    Ok(s)
}

// Canonical resolved form the identity hash is computed over. The seed is
// forced to zero and the policy is omitted: both select how a scenario is
// driven, not what the scenario is.
#[derive(Serialize)]
struct HashNode<'a> {
    id: NodeId,
    cpu_capacity: f64,
    mem_capacity: f64,
    power: &'a PowerProfile,
    neighbors: Vec<NodeId>,
}

#[derive(Serialize)]
struct HashFault<'a> {
    kind: &'static str,
    at_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    node: Option<NodeId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    join: Option<&'a JoinSpec>,
}

#[derive(Serialize)]
struct HashForm<'a> {
    name: &'a str,
    seed: u64,
    horizon_s: f64,
    sample_interval_s: f64,
    tunables: &'a Tunables,
    ants: BTreeMap<&'static str, AntSchedule>,
    nodes: Vec<HashNode<'a>>,
    requests: Vec<&'a ServiceRequest>,
    workloads: BTreeMap<&'a str, &'a [Breakpoint]>,
    faults: Vec<HashFault<'a>>,
}

fn config_hash(
    raw: &RawScenario,
    tunables: &Tunables,
    ants: &BTreeMap<AntKind, AntSchedule>,
    nodes: &BTreeMap<NodeId, NodeRecord>,
    requests: &BTreeMap<RequestId, ServiceRequest>,
    workloads: &BTreeMap<String, WorkloadTrace>,
    faults: &[FaultSpec],
) -> String {
    let kind_key = |kind: AntKind| match kind {
        AntKind::Tester => "tester",
        AntKind::Cleaner => "cleaner",
        AntKind::Scout => "scout",
    };
    let form = HashForm {
        name: &raw.name,
        seed: 0,
        horizon_s: raw.horizon_s,
        sample_interval_s: raw.sample_interval_s,
        tunables,
        ants: ants.iter().map(|(k, v)| (kind_key(*k), *v)).collect(),
        nodes: nodes
            .values()
            .map(|n| HashNode {
                id: n.id,
                cpu_capacity: n.cpu_capacity,
                mem_capacity: n.mem_capacity,
                power: &n.power,
                neighbors: n.neighbors.iter().copied().collect(),
            })
            .collect(),
        requests: requests.values().collect(),
        workloads: workloads
            .iter()
            .map(|(name, trace)| (name.as_str(), trace.breakpoints()))
            .collect(),
        faults: faults
            .iter()
            .map(|f| match f {
                FaultSpec::Fail { at_s, node } => HashFault {
                    kind: "node_fail",
                    at_s: *at_s,
                    node: Some(*node),
                    join: None,
                },
                FaultSpec::Join { at_s, spec } => HashFault {
                    kind: "node_join",
                    at_s: *at_s,
                    node: None,
                    join: Some(spec),
                },
            })
            .collect(),
    };
    let json = serde_json::to_string(&form).expect("hash form is plain data");
    let mut hasher = Sha256::new();
    hasher.update(json.as_bytes());
    let digest = hasher.finalize();
    let mut hex = String::with_capacity(64);
    for byte in digest {
        hex.push_str(&format!("{byte:02x}"));
    }
    hex
}

/// Parse and resolve a scenario from TOML text. `base_dir` anchors relative
/// trace-file paths (the scenario file's directory when loading from disk).
pub fn parse_scenario(text: &str, base_dir: Option<&Path>) -> Result<Scenario, ConfigError> {
    let raw: RawFile = toml::from_str(text)?;
    let sc = &raw.scenario;
    if sc.name.is_empty() {
        return Err(invalid("scenario name must not be empty"));
    }
    if !(sc.horizon_s.is_finite() && sc.horizon_s > 0.0) {
        return Err(invalid(format!(
            "horizon_s must be positive, got {}",
            sc.horizon_s
        )));
    }
    if !(sc.sample_interval_s.is_finite() && sc.sample_interval_s > 0.0) {
        return Err(invalid(format!(
            "sample_interval_s must be positive, got {}",
            sc.sample_interval_s
        )));
    }
    let policy = match sc.policy.as_str() {
        "ant" => Policy::Ant,
        "round_robin" => Policy::RoundRobin,
        "first_fit" => Policy::FirstFit,
        other => {
            return Err(invalid(format!(
                "unknown policy `{other}` (expected ant, round_robin, or first_fit)"
            )))
        }
    };
    if raw.nodes.is_empty() {
        return Err(invalid("scenario declares no nodes"));
    }

    let tunables = resolve_tunables(&raw.tunables)?;
    let mut ants = BTreeMap::new();
    ants.insert(
        AntKind::Tester,
        resolve_ant(AntKind::Tester, raw.ants.tester.as_ref())?,
    );
    ants.insert(
        AntKind::Cleaner,
        resolve_ant(AntKind::Cleaner, raw.ants.cleaner.as_ref())?,
    );
    ants.insert(
        AntKind::Scout,
        resolve_ant(AntKind::Scout, raw.ants.scout.as_ref())?,
    );

    // Collect every node id ever declared (initial fleet plus joins) so
    // neighbor and fault references can be checked against the full set.
    let mut initial_ids = BTreeSet::new();
    for n in &raw.nodes {
        if !initial_ids.insert(n.id) {
            return Err(invalid(format!("node {} declared twice", n.id)));
        }
    }
    let mut all_ids = initial_ids.clone();
    for f in &raw.faults {
        if f.kind == "node_join" {
            let id = f
                .id
                .ok_or_else(|| invalid("node_join fault requires `id`"))?;
            if !all_ids.insert(id) {
                return Err(invalid(format!(
                    "node_join fault reuses node id {id}"
                )));
            }
        }
    }

    let mut nodes: BTreeMap<NodeId, NodeRecord> = BTreeMap::new();
    for rn in &raw.nodes {
        if !(rn.cpu_capacity.is_finite() && rn.cpu_capacity > 0.0)
            || !(rn.mem_capacity.is_finite() && rn.mem_capacity > 0.0)
        {
            return Err(invalid(format!("node {} has non-positive capacity", rn.id)));
        }
        rn.power.validate()?;
        let mut rec = NodeRecord::new(
            NodeId(rn.id),
            rn.cpu_capacity,
            rn.mem_capacity,
            rn.power,
            NodeState::Active,
        );
        for nb in &rn.neighbors {
            if *nb == rn.id {
                return Err(invalid(format!("node {} lists itself as neighbor", rn.id)));
            }
            if !all_ids.contains(nb) {
                return Err(invalid(format!(
                    "node {} lists unknown neighbor {nb}",
                    rn.id
                )));
            }
            rec.neighbors.insert(NodeId(*nb));
        }
        nodes.insert(rec.id, rec);
    }
    // Make the initial adjacency symmetric; links to not-yet-joined nodes
    // become live when the join wires its own side.
    let links: Vec<(NodeId, NodeId)> = nodes
        .values()
        .flat_map(|n| n.neighbors.iter().map(move |nb| (*nb, n.id)))
        .collect();
    for (a, b) in links {
        if let Some(node) = nodes.get_mut(&a) {
            node.neighbors.insert(b);
        }
    }

    let mut workloads: BTreeMap<String, WorkloadTrace> = BTreeMap::new();
    for rw in &raw.workloads {
        if rw.name.is_empty() {
            return Err(invalid("workload name must not be empty"));
        }
        let trace = resolve_workload(rw, sc.horizon_s, base_dir)?;
        if workloads.insert(rw.name.clone(), trace).is_some() {
            return Err(invalid(format!("workload {} declared twice", rw.name)));
        }
    }

    let mut requests: BTreeMap<RequestId, ServiceRequest> = BTreeMap::new();
    for rr in &raw.requests {
        if rr.id.is_empty() {
            return Err(invalid("request id must not be empty"));
        }
        if !(rr.arrival_s.is_finite() && rr.arrival_s >= 0.0) {
            return Err(invalid(format!(
                "request {}: arrival_s must be non-negative",
                rr.id
            )));
        }
        if !(rr.rtime_target_s.is_finite() && rr.rtime_target_s > 0.0) {
            return Err(invalid(format!(
                "request {}: rtime_target_s must be positive",
                rr.id
            )));
        }
        if !(rr.thput_target > 0.0 && rr.thput_target <= 1.0) {
            return Err(invalid(format!(
                "request {}: thput_target must be in (0, 1]",
                rr.id
            )));
        }
        if !(rr.lease_s.is_finite() && rr.lease_s > 0.0) {
            return Err(invalid(format!(
                "request {}: lease_s must be positive",
                rr.id
            )));
        }
        if !workloads.contains_key(&rr.workload) {
            return Err(invalid(format!(
                "request {} references unknown workload {}",
                rr.id, rr.workload
            )));
        }
        let req = ServiceRequest {
            id: RequestId(rr.id.clone()),
            thput_target: rr.thput_target,
            rtime_target: rr.rtime_target_s,
            app_label: rr.app.clone(),
            os_label: rr.os.clone(),
            lease_duration: rr.lease_s,
            arrival_time: rr.arrival_s,
            workload: rr.workload.clone(),
        };
        if requests.insert(req.id.clone(), req).is_some() {
            return Err(invalid(format!("request {} declared twice", rr.id)));
        }
    }

    let mut faults: Vec<FaultSpec> = Vec::new();
    for rf in &raw.faults {
        if !(rf.at_s.is_finite() && rf.at_s >= 0.0) {
            return Err(invalid("fault at_s must be non-negative"));
        }
        match rf.kind.as_str() {
            "node_fail" => {
                let node = rf
                    .node
                    .ok_or_else(|| invalid("node_fail fault requires `node`"))?;
                if !all_ids.contains(&node) {
                    return Err(invalid(format!("node_fail names unknown node {node}")));
                }
                faults.push(FaultSpec::Fail {
                    at_s: rf.at_s,
                    node: NodeId(node),
                });
            }
            "node_join" => {
                let id = rf.id.expect("checked while collecting ids");
                let cpu = rf
                    .cpu_capacity
                    .ok_or_else(|| invalid("node_join fault requires `cpu_capacity`"))?;
                let mem = rf
                    .mem_capacity
                    .ok_or_else(|| invalid("node_join fault requires `mem_capacity`"))?;
                if !(cpu.is_finite() && cpu > 0.0) || !(mem.is_finite() && mem > 0.0) {
                    return Err(invalid(format!("joined node {id} has non-positive capacity")));
                }
                let power = rf
                    .power
                    .ok_or_else(|| invalid("node_join fault requires `power`"))?;
                power.validate()?;
                let mut neighbors = Vec::new();
                for nb in &rf.neighbors {
                    if *nb == id {
                        return Err(invalid(format!("joined node {id} lists itself as neighbor")));
                    }
                    if !all_ids.contains(nb) {
                        return Err(invalid(format!(
                            "joined node {id} lists unknown neighbor {nb}"
                        )));
                    }
                    neighbors.push(NodeId(*nb));
                }
                faults.push(FaultSpec::Join {
                    at_s: rf.at_s,
                    spec: JoinSpec {
                        id: NodeId(id),
                        cpu_capacity: cpu,
                        mem_capacity: mem,
                        power,
                        neighbors,
                    },
                });
            }
            other => return Err(invalid(format!("unknown fault kind `{other}`"))),
        }
    }

    let config_sha256 = config_hash(sc, &tunables, &ants, &nodes, &requests, &workloads, &faults);
    let world = World::new(nodes, requests, workloads, tunables)?;
    let params = EngineParams {
        scenario_name: sc.name.clone(),
        seed: sc.seed,
        policy,
        horizon_s: sc.horizon_s,
        sample_interval_s: sc.sample_interval_s,
        config_sha256,
        ants,
        faults,
        record: false,
        check_invariants: false,
    };
    Ok(Scenario { world, params })
}

/// Load a scenario file from disk; trace-file paths resolve relative to it.
pub fn load_scenario(path: &Path) -> Result<Scenario, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, path.parent())
}
