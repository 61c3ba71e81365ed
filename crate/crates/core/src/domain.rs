//! Core data model: nodes, service requests, VM instances, and the
//! efficiency-sorted resource table shared by the agent colony.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Stable identifier of a physical node.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "n{}", self.0)
    }
}

/// Stable identifier of a VM instance.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct VmId(pub u64);

impl fmt::Display for VmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "vm{}", self.0)
    }
}

/// Identifier of a service request, taken verbatim from the scenario.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct RequestId(pub String);

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RequestId {
    fn from(s: &str) -> Self {
        RequestId(s.to_string())
    }
}

/// Power state of a node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeState {
    /// Powered on and able to host VMs.
    Active,
    /// Low-power sleep, resumable within `wake_latency_s`.
    Standby,
    /// Powered down, must boot through standby.
    Off,
    /// Declared dead by failure detection; never leaves this state.
    Failed,
}

impl fmt::Display for NodeState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            NodeState::Active => "active",
            NodeState::Standby => "standby",
            NodeState::Off => "off",
            NodeState::Failed => "failed",
        };
        f.write_str(s)
    }
}

/// Static power characteristics of a node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerProfile {
    /// Idle draw while active, watts.
    pub base_w: f64,
    /// Additional draw at 100% CPU utilization, watts.
    pub cpu_peak_w: f64,
    /// Additional draw at 100% memory utilization, watts.
    pub mem_peak_w: f64,
    /// Draw while in standby, watts.
    pub standby_w: f64,
    /// Standby -> active resume time, seconds.
    pub wake_latency_s: f64,
    /// Off -> standby boot time, seconds.
    pub boot_latency_s: f64,
}

impl PowerProfile {
    pub fn validate(&self) -> Result<(), DomainError> {
        let check = |name: &str, v: f64, allow_zero: bool| {
            if !v.is_finite() || v < 0.0 || (!allow_zero && v == 0.0) {
                Err(DomainError::InvalidProfile(format!("{name} = {v}")))
            } else {
                Ok(())
            }
        };
        check("base_w", self.base_w, false)?;
        check("cpu_peak_w", self.cpu_peak_w, false)?;
        check("mem_peak_w", self.mem_peak_w, false)?;
        check("standby_w", self.standby_w, true)?;
        check("wake_latency_s", self.wake_latency_s, true)?;
        check("boot_latency_s", self.boot_latency_s, true)?;
        if self.standby_w >= self.base_w {
            return Err(DomainError::InvalidProfile(format!(
                "standby_w {} must be below base_w {}",
                self.standby_w, self.base_w
            )));
        }
        Ok(())
    }
}

/// An in-flight power state transition. The node's `state` field already
/// holds the target; until `complete_at` the node is billed at the worse of
/// the two endpoint draws and cannot start another transition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PendingTransition {
    pub from: NodeState,
    pub complete_at: f64,
    /// Monotonic per-node counter so stale completion events are ignored.
    pub epoch: u64,
}

/// A physical machine in the data center.
#[derive(Debug, Clone, Serialize)]
pub struct NodeRecord {
    pub id: NodeId,
    /// Total CPU capacity, abstract GHz-equivalent units.
    pub cpu_capacity: f64,
    /// Total memory capacity, GB.
    pub mem_capacity: f64,
    pub power: PowerProfile,
    pub state: NodeState,
    pub pending: Option<PendingTransition>,
    /// VMs placed here, in placement order.
    pub hosted: Vec<VmId>,
    /// Direct links for ant movement.
    pub neighbors: BTreeSet<NodeId>,
    /// Capacity not yet promised to entitlements.
    pub remaining_cpu: f64,
    pub remaining_mem: f64,
    /// Whether the colony may see and use this node.
    pub registered: bool,
    /// Last time the node answered an agent, seconds.
    pub last_seen: f64,
    /// False once the underlying machine has crashed; it stops answering
    /// agents but is only marked Failed when the silence is noticed.
    pub responsive: bool,
}

impl NodeRecord {
    pub fn new(
        id: NodeId,
        cpu_capacity: f64,
        mem_capacity: f64,
        power: PowerProfile,
        state: NodeState,
    ) -> Self {
        NodeRecord {
            id,
            cpu_capacity,
            mem_capacity,
            power,
            state,
            pending: None,
            hosted: Vec::new(),
            neighbors: BTreeSet::new(),
            remaining_cpu: cpu_capacity,
            remaining_mem: mem_capacity,
            registered: true,
            last_seen: 0.0,
            responsive: true,
        }
    }

    /// Can this node accept new load right now?
    pub fn usable(&self) -> bool {
        self.registered && self.responsive && self.state == NodeState::Active
    }
}

/// Service-level agreement monitor verdicts.
///
/// Two-digit codes: first digit 1 = recommended (early warning band),
/// 2 = critical (agreed limit breached); second digit 1 = act by migration,
/// 2 = act by cloning. `Ok` means both metrics are inside the agreed band.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SlamCode {
    Ok,
    RecommendMigrate,
    RecommendClone,
    CriticalMigrate,
    CriticalClone,
}

impl SlamCode {
    pub fn code(self) -> u8 {
        match self {
            SlamCode::Ok => 0,
            SlamCode::RecommendMigrate => 11,
            SlamCode::RecommendClone => 12,
            SlamCode::CriticalMigrate => 21,
            SlamCode::CriticalClone => 22,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(SlamCode::Ok),
            11 => Some(SlamCode::RecommendMigrate),
            12 => Some(SlamCode::RecommendClone),
            21 => Some(SlamCode::CriticalMigrate),
            22 => Some(SlamCode::CriticalClone),
            _ => None,
        }
    }

    pub fn is_critical(self) -> bool {
        matches!(self, SlamCode::CriticalMigrate | SlamCode::CriticalClone)
    }

    pub fn is_recommended(self) -> bool {
        matches!(self, SlamCode::RecommendMigrate | SlamCode::RecommendClone)
    }
}

impl fmt::Display for SlamCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

/// A tenant's request for hosted capacity with agreed service levels.
#[derive(Debug, Clone, Serialize)]
pub struct ServiceRequest {
    pub id: RequestId,
    /// Agreed delivered-throughput floor, fraction of offered load in (0, 1].
    pub thput_target: f64,
    /// Agreed response-time ceiling, seconds.
    pub rtime_target: f64,
    /// Cosmetic grouping label for reports.
    pub app_label: String,
    /// Requested OS image label; informational.
    pub os_label: String,
    /// Lease length from deployment, seconds.
    pub lease_duration: f64,
    pub arrival_time: f64,
    /// Name of the workload trace driving this request's offered rate.
    pub workload: String,
}

/// A running VM instance serving one request, possibly as a clone.
#[derive(Debug, Clone, Serialize)]
pub struct VmInstance {
    pub id: VmId,
    pub request: RequestId,
    pub host: NodeId,
    pub cpu_entitlement: f64,
    pub mem_entitlement: f64,
    pub is_clone: bool,
    pub parent_vm: Option<VmId>,
    /// Fraction of the request's offered traffic routed here.
    pub traffic_share: f64,
    /// Absolute simulation time the lease runs out.
    pub lease_expiry: f64,
    /// Last monitor verdict.
    pub slam: SlamCode,
    /// Last refreshed observation, if any.
    pub last_obs: Option<crate::sla::SlaObservation>,
    /// While set, the VM is mid-migration and serves no traffic.
    pub migrating_until: Option<f64>,
}

/// Errors from domain-level operations.
#[derive(Debug, Error, PartialEq)]
pub enum DomainError {
    #[error("invalid power profile: {0}")]
    InvalidProfile(String),
    #[error("node {0} not found")]
    NodeNotFound(NodeId),
    #[error("capacity must be finite and positive, got {0}")]
    InvalidCapacity(f64),
    #[error("node {0} is already registered")]
    AlreadyRegistered(NodeId),
}

/// Processing-power-per-watt figure used to rank nodes.
pub fn compute_ppw(cpu_capacity: f64, cpu_peak_w: f64) -> Result<f64, DomainError> {
    if !(cpu_capacity.is_finite() && cpu_capacity > 0.0) {
        return Err(DomainError::InvalidCapacity(cpu_capacity));
    }
    if !(cpu_peak_w.is_finite() && cpu_peak_w > 0.0) {
        return Err(DomainError::InvalidProfile(format!("cpu_peak_w = {cpu_peak_w}")));
    }
    Ok(cpu_capacity / cpu_peak_w)
}

/// Memory-per-watt figure used to rank nodes.
pub fn compute_mpw(mem_capacity: f64, mem_peak_w: f64) -> Result<f64, DomainError> {
    if !(mem_capacity.is_finite() && mem_capacity > 0.0) {
        return Err(DomainError::InvalidCapacity(mem_capacity));
    }
    if !(mem_peak_w.is_finite() && mem_peak_w > 0.0) {
        return Err(DomainError::InvalidProfile(format!("mem_peak_w = {mem_peak_w}")));
    }
    Ok(mem_capacity / mem_peak_w)
}

/// Weights blending the two per-watt figures into one sort key.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SortWeights {
    pub ppw: f64,
    pub mpw: f64,
}

impl Default for SortWeights {
    fn default() -> Self {
        SortWeights { ppw: 0.5, mpw: 0.5 }
    }
}

/// One row of the shared resource table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableEntry {
    pub node: NodeId,
    /// Blended, max-normalized efficiency key the order is derived from.
    pub key: f64,
    /// Last power draw reported by a tester visit, watts.
    pub power_w: f64,
}

/// The colony's shared view of usable capacity: nodes in descending
/// efficiency order plus the allocation pointer new deployments start from.
///
/// Sorting happens only when the node set changes (registration, removal);
/// in between, the order is stable no matter how utilization moves.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ResourceTable {
    entries: Vec<TableEntry>,
    pointer: Option<usize>,
}

impl ResourceTable {
    /// Build a fresh table over `nodes`, pointer at the most efficient entry.
    pub fn build(
        nodes: &BTreeMap<NodeId, NodeRecord>,
        weights: SortWeights,
    ) -> Result<Self, DomainError> {
        let ids: Vec<NodeId> = nodes
            .values()
            .filter(|n| n.registered)
            .map(|n| n.id)
            .collect();
        let entries = sorted_entries(nodes, &ids, weights)?;
        let pointer = if entries.is_empty() { None } else { Some(0) };
        Ok(ResourceTable { entries, pointer })
    }

    pub fn entries(&self) -> &[TableEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn pointer(&self) -> Option<usize> {
        self.pointer
    }

    pub fn pointer_node(&self) -> Option<NodeId> {
        self.pointer.map(|i| self.entries[i].node)
    }

    pub fn position(&self, id: NodeId) -> Option<usize> {
        self.entries.iter().position(|e| e.node == id)
    }

    pub fn node_at(&self, index: usize) -> Option<NodeId> {
        self.entries.get(index).map(|e| e.node)
    }

    pub fn set_power(&mut self, id: NodeId, power_w: f64) {
        if let Some(e) = self.entries.iter_mut().find(|e| e.node == id) {
            e.power_w = power_w;
        }
    }

    /// Move the pointer one entry down the order. Returns the node now
    /// pointed at, or `None` when the pointer ran past the end (Invalid).
    pub fn advance(&mut self) -> Option<NodeId> {
        match self.pointer {
            Some(i) if i + 1 < self.entries.len() => {
                self.pointer = Some(i + 1);
                Some(self.entries[i + 1].node)
            }
            _ => {
                self.pointer = None;
                None
            }
        }
    }

    /// Insert a newly registered node, re-sorting the whole table because
    /// every key is normalized against the set-wide maxima. The pointer is
    /// re-anchored to the node id it indexed before the insert.
    pub fn register(
        &mut self,
        nodes: &BTreeMap<NodeId, NodeRecord>,
        weights: SortWeights,
        id: NodeId,
    ) -> Result<(), DomainError> {
        if self.position(id).is_some() {
            return Err(DomainError::AlreadyRegistered(id));
        }
        if !nodes.contains_key(&id) {
            return Err(DomainError::NodeNotFound(id));
        }
        let anchored = self.pointer_node();
        let mut ids: Vec<NodeId> = self.entries.iter().map(|e| e.node).collect();
        ids.push(id);
        let old_power: BTreeMap<NodeId, f64> =
            self.entries.iter().map(|e| (e.node, e.power_w)).collect();
        self.entries = sorted_entries(nodes, &ids, weights)?;
        for e in self.entries.iter_mut() {
            if let Some(p) = old_power.get(&e.node) {
                e.power_w = *p;
            }
        }
        self.pointer = match anchored {
            Some(n) => self.position(n),
            None if self.entries.len() == 1 => Some(0),
            None => None,
        };
        Ok(())
    }

    /// Drop a node from the table, re-sorting the remainder. If the pointer
    /// sat on the removed entry it re-anchors to that entry's old successor;
    /// with no successor it goes Invalid.
    pub fn remove(
        &mut self,
        nodes: &BTreeMap<NodeId, NodeRecord>,
        weights: SortWeights,
        id: NodeId,
    ) -> Result<(), DomainError> {
        let pos = self.position(id).ok_or(DomainError::NodeNotFound(id))?;
        let anchored = match self.pointer_node() {
            Some(n) if n == id => self.entries.get(pos + 1).map(|e| e.node),
            other => other,
        };
        let ids: Vec<NodeId> = self
            .entries
            .iter()
            .map(|e| e.node)
            .filter(|n| *n != id)
            .collect();
        let old_power: BTreeMap<NodeId, f64> =
            self.entries.iter().map(|e| (e.node, e.power_w)).collect();
        self.entries = sorted_entries(nodes, &ids, weights)?;
        for e in self.entries.iter_mut() {
            if let Some(p) = old_power.get(&e.node) {
                e.power_w = *p;
            }
        }
        self.pointer = anchored.and_then(|n| self.position(n));
        Ok(())
    }
}

/// Compute normalized keys for `ids` and return entries in descending key
/// order, ties broken by ascending node id.
fn sorted_entries(
    nodes: &BTreeMap<NodeId, NodeRecord>,
    ids: &[NodeId],
    weights: SortWeights,
) -> Result<Vec<TableEntry>, DomainError> {
    let mut figures = Vec::with_capacity(ids.len());
    let mut max_ppw = 0.0f64;
    let mut max_mpw = 0.0f64;
    for id in ids {
        let node = nodes.get(id).ok_or(DomainError::NodeNotFound(*id))?;
        let ppw = compute_ppw(node.cpu_capacity, node.power.cpu_peak_w)?;
        let mpw = compute_mpw(node.mem_capacity, node.power.mem_peak_w)?;
        max_ppw = max_ppw.max(ppw);
        max_mpw = max_mpw.max(mpw);
        figures.push((*id, ppw, mpw));
    }
    let norm = |v: f64, max: f64| if max > 0.0 { v / max } else { 0.0 };
    let mut entries: Vec<TableEntry> = figures
        .into_iter()
        .map(|(id, ppw, mpw)| TableEntry {
            node: id,
            key: weights.ppw * norm(ppw, max_ppw) + weights.mpw * norm(mpw, max_mpw),
            power_w: 0.0,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.key
            .partial_cmp(&a.key)
            .expect("keys are finite")
            .then(a.node.cmp(&b.node))
    });
    Ok(entries)
}

/// Remaining (cpu, mem) capacity of a node.
pub fn remaining_capacity(
    nodes: &BTreeMap<NodeId, NodeRecord>,
    id: NodeId,
) -> Result<(f64, f64), DomainError> {
    let node = nodes.get(&id).ok_or(DomainError::NodeNotFound(id))?;
    Ok((node.remaining_cpu, node.remaining_mem))
}
