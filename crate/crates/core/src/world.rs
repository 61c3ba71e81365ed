//! Shared simulation state: the fleet, the VM population, the controller's
//! queue and logs, and the mutation helpers every agent behavior goes
//! through. Behaviors return the `Action` values they performed so runs can
//! be audited and replayed against reference interpreters.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use crate::domain::{
    NodeId, NodeRecord, NodeState, PendingTransition, RequestId, ResourceTable, ServiceRequest,
    SlamCode, SortWeights, VmId, VmInstance,
};
use crate::power::transition_latency;
use crate::sla::{self, SlamThresholds};
use crate::workload::WorkloadTrace;

/// Behavior knobs, resolved from the scenario once and then read-only.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tunables {
    /// Entitlement of a freshly deployed VM.
    pub basic_vm_cpu: f64,
    pub basic_vm_mem: f64,
    pub sort_weights: SortWeights,
    pub slam: SlamThresholds,
    /// Response-time cap reported at and beyond queue saturation, seconds.
    pub saturation_rtime: f64,
    /// Node utilization above which a tester treats the node as overloaded.
    pub overload_util: f64,
    /// Node utilization below which (cpu and mem both) a tester tries to
    /// empty the node.
    pub consolidate_util: f64,
    /// Free-capacity multiple of measured use required to accept a migration.
    pub migrate_headroom: f64,
    /// Clone entitlement as a fraction of the parent's measured use.
    pub clone_fraction: f64,
    /// Smallest entitlement a clone may be created with.
    pub clone_floor: f64,
    /// A clone beating its response-time target by this factor (and the
    /// throughput floor by `perf_excess_thput`) is considered surplus.
    pub perf_excess_rtime: f64,
    pub perf_excess_thput: f64,
    /// Measured use below this counts as no consumption at all.
    pub nil_epsilon: f64,
    /// How many entries past the pointer are kept ready in standby.
    pub warm_pool_size: usize,
    /// Silence after which an unresponsive node is declared failed, seconds.
    pub failure_timeout: f64,
    /// Lead time for lease-expiry warnings, seconds.
    pub lease_warning_window: f64,
    /// When positive, a migrating VM serves nothing for this long, seconds.
    pub migration_latency: f64,
    /// Desired steady-state utilization; carried for registries, unused by
    /// the behaviors.
    pub util_desired: f64,
}

impl Default for Tunables {
    fn default() -> Self {
        Tunables {
            basic_vm_cpu: 1.0,
            basic_vm_mem: 1.0,
            sort_weights: SortWeights::default(),
            slam: SlamThresholds::default(),
            saturation_rtime: 100.0,
            overload_util: 0.90,
            consolidate_util: 0.50,
            migrate_headroom: 1.30,
            clone_fraction: 0.50,
            clone_floor: 1e-3,
            perf_excess_rtime: 0.70,
            perf_excess_thput: 1.30,
            nil_epsilon: 1e-9,
            warm_pool_size: 3,
            failure_timeout: 60.0,
            lease_warning_window: 604_800.0,
            migration_latency: 0.0,
            util_desired: 0.80,
        }
    }
}

/// Who performed a logged action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Actor {
    /// The controller: admission and warm-pool upkeep.
    Controller,
    Tester,
    Cleaner,
    Scout,
    /// Engine-driven bookkeeping (baseline policies, initialization).
    Engine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MigrateReason {
    Critical,
    Recommended,
    Consolidation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdminReason {
    /// Nowhere left to place load.
    ResourceScarcity,
    /// The ready pool is thinner than configured.
    FewResources,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateReason {
    /// The allocation pointer moved onto a node that was not awake.
    AllocationWake,
    /// Warm-pool upkeep booted a node into standby.
    PoolFill,
    /// A node fell out of the warm pool and was powered off.
    PoolRelease,
    /// An overload handler woke a standby node for relief capacity.
    CriticalWake,
    /// An overload handler booted the next powered-off node into standby.
    PoolReplenish,
    /// A drained node was put to sleep after consolidation.
    ConsolidateSleep,
    /// The last standby node was powered off after consolidation.
    TailOff,
}

/// One externally visible thing an agent did to the shared state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Deploy {
        request: RequestId,
        vm: VmId,
        node: NodeId,
    },
    Reject {
        request: RequestId,
    },
    AdvancePointer {
        to: Option<NodeId>,
    },
    Migrate {
        vm: VmId,
        from: NodeId,
        to: NodeId,
        reason: MigrateReason,
    },
    CloneVm {
        parent: VmId,
        clone: VmId,
        node: NodeId,
        cpu: f64,
        mem: f64,
    },
    RemoveClone {
        clone: VmId,
        node: NodeId,
    },
    RemoveVm {
        vm: VmId,
        node: NodeId,
    },
    StateChange {
        node: NodeId,
        from: NodeState,
        to: NodeState,
        reason: StateReason,
    },
    MarkFailed {
        node: NodeId,
    },
    RegisterNode {
        node: NodeId,
    },
    NotifyAdmin {
        reason: AdminReason,
    },
    NotifyUser {
        request: RequestId,
    },
}

/// An action with its place in the run's history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoggedAction {
    pub t: f64,
    pub seq: u64,
    pub actor: Actor,
    pub action: Action,
}

/// Controller-resident state: the admission queue and notification books.
#[derive(Debug, Clone, Default)]
pub struct ControllerState {
    pub queue: VecDeque<RequestId>,
    pub admin_notices: Vec<(f64, AdminReason)>,
    pub user_notices: Vec<(f64, RequestId)>,
    /// Requests already warned about lease expiry.
    pub warned: BTreeSet<RequestId>,
    /// Pointer positions a pool-shortfall notice was already sent for.
    pub pool_noted: BTreeSet<usize>,
}

/// The whole mutable simulation state.
#[derive(Debug, Clone)]
pub struct World {
    pub now: f64,
    pub nodes: BTreeMap<NodeId, NodeRecord>,
    pub vms: BTreeMap<VmId, VmInstance>,
    pub requests: BTreeMap<RequestId, ServiceRequest>,
    pub workloads: BTreeMap<String, WorkloadTrace>,
    pub table: ResourceTable,
    pub controller: ControllerState,
    pub tunables: Tunables,
    pub next_vm_id: u64,
    /// Monotonic counter for pending-transition epochs.
    next_epoch: u64,
}

impl World {
    pub fn new(
        nodes: BTreeMap<NodeId, NodeRecord>,
        requests: BTreeMap<RequestId, ServiceRequest>,
        workloads: BTreeMap<String, WorkloadTrace>,
        tunables: Tunables,
    ) -> Result<Self, crate::domain::DomainError> {
        let table = ResourceTable::build(&nodes, tunables.sort_weights)?;
        Ok(World {
            now: 0.0,
            nodes,
            vms: BTreeMap::new(),
            requests,
            workloads,
            table,
            controller: ControllerState::default(),
            tunables,
            next_vm_id: 0,
            next_epoch: 0,
        })
    }

    fn trace_of(&self, request: &RequestId) -> &WorkloadTrace {
        let req = &self.requests[request];
        &self.workloads[&req.workload]
    }

    /// Offered request rate currently routed to this VM, 1/s.
    pub fn vm_lambda(&self, vm: &VmInstance) -> f64 {
        if matches!(vm.migrating_until, Some(until) if self.now < until) {
            return 0.0;
        }
        vm.traffic_share * self.trace_of(&vm.request).rate_at(self.now)
    }

    /// Service rate the VM's entitlement sustains, 1/s.
    pub fn vm_mu(&self, vm: &VmInstance) -> f64 {
        vm.cpu_entitlement / self.trace_of(&vm.request).demand_at(self.now)
    }

    /// Capacity actually consumed right now: entitlement scaled by how full
    /// the VM's queue is. An idle VM holds its entitlement but burns nothing.
    pub fn vm_used(&self, vm: &VmInstance) -> (f64, f64) {
        let mu = self.vm_mu(vm);
        let rho = (self.vm_lambda(vm) / mu).min(1.0);
        (vm.cpu_entitlement * rho, vm.mem_entitlement * rho)
    }

    /// Total capacity consumed on a node.
    pub fn node_used(&self, id: NodeId) -> (f64, f64) {
        let node = &self.nodes[&id];
        let mut cpu = 0.0;
        let mut mem = 0.0;
        for vm_id in &node.hosted {
            let (c, m) = self.vm_used(&self.vms[vm_id]);
            cpu += c;
            mem += m;
        }
        (cpu, mem)
    }

    /// Node utilization as fractions of capacity.
    pub fn node_utilization(&self, id: NodeId) -> (f64, f64) {
        let node = &self.nodes[&id];
        let (cpu, mem) = self.node_used(id);
        (cpu / node.cpu_capacity, mem / node.mem_capacity)
    }

    /// The scalar testers rank VMs by: the larger of the VM's two shares of
    /// its host's capacity.
    pub fn vm_load_scalar(&self, vm: &VmInstance) -> f64 {
        let node = &self.nodes[&vm.host];
        let (cpu, mem) = self.vm_used(vm);
        (cpu / node.cpu_capacity).max(mem / node.mem_capacity)
    }

    /// Ground-truth verdict for a VM right now, independent of when any
    /// agent last looked. Read-only twin of [`World::refresh_vm`]; the
    /// engine bills violation time from this, not from stored beliefs, so
    /// the metric does not depend on how often a policy takes measurements.
    pub fn vm_current_slam(&self, vm: &VmInstance) -> SlamCode {
        let req = &self.requests[&vm.request];
        let obs = sla::observe(
            self.vm_lambda(vm),
            self.vm_mu(vm),
            self.tunables.saturation_rtime,
        )
        .expect("validated scenarios keep rates finite and service rates positive");
        sla::compute_slam(req.rtime_target, req.thput_target, &obs, &self.tunables.slam)
            .expect("validated scenarios keep targets positive")
    }

    /// Re-measure one VM and refresh its stored verdict.
    pub fn refresh_vm(&mut self, vm_id: VmId) -> SlamCode {
        let vm = &self.vms[&vm_id];
        let req = &self.requests[&vm.request];
        let obs = sla::observe(
            self.vm_lambda(vm),
            self.vm_mu(vm),
            self.tunables.saturation_rtime,
        )
        .expect("validated scenarios keep rates finite and service rates positive");
        let slam = sla::compute_slam(req.rtime_target, req.thput_target, &obs, &self.tunables.slam)
            .expect("validated scenarios keep targets positive");
        let vm = self.vms.get_mut(&vm_id).expect("vm id was just read");
        vm.last_obs = Some(obs);
        vm.slam = slam;
        slam
    }

    /// Flip a node to `to`, recording the pending window when the path has
    /// latency. A zero-latency flip during a pending window keeps the window
    /// but bills it at the worse of the old source and the state being left,
    /// so interrupted wakes are never billed below what they actually drew.
    pub fn set_state(&mut self, id: NodeId, to: NodeState, reason: StateReason) -> Action {
        let now = self.now;
        self.next_epoch += 1;
        let epoch = self.next_epoch;
        let node = self.nodes.get_mut(&id).expect("state change on known node");
        let from = node.state;
        let latency = transition_latency(from, to, &node.power)
            .expect("agent behaviors only request legal power paths");
        let draw_rank = |s: NodeState| match s {
            NodeState::Active => 2,
            NodeState::Standby => 1,
            NodeState::Off | NodeState::Failed => 0,
        };
        let worse = |a: NodeState, b: NodeState| {
            if draw_rank(a) >= draw_rank(b) {
                a
            } else {
                b
            }
        };
        if latency > 0.0 {
            let source = match &node.pending {
                Some(p) => worse(p.from, from),
                None => from,
            };
            let eta = match &node.pending {
                Some(p) => p.complete_at.max(now + latency),
                None => now + latency,
            };
            node.pending = Some(PendingTransition {
                from: source,
                complete_at: eta,
                epoch,
            });
        } else if let Some(p) = node.pending.as_mut() {
            p.from = worse(p.from, from);
        }
        node.state = to;
        Action::StateChange {
            node: id,
            from,
            to,
            reason,
        }
    }

    /// Declare a node dead: it leaves the billed fleet immediately.
    pub fn mark_failed(&mut self, id: NodeId) -> Action {
        let node = self.nodes.get_mut(&id).expect("failing a known node");
        node.state = NodeState::Failed;
        node.pending = None;
        node.registered = false;
        Action::MarkFailed { node: id }
    }

    /// Place a VM, charging its entitlement to the host.
    pub fn place_vm(&mut self, vm: VmInstance) {
        let node = self.nodes.get_mut(&vm.host).expect("placing on known node");
        node.remaining_cpu -= vm.cpu_entitlement;
        node.remaining_mem -= vm.mem_entitlement;
        node.hosted.push(vm.id);
        self.vms.insert(vm.id, vm);
    }

    /// Remove a VM, returning its entitlement to the host.
    pub fn remove_vm_record(&mut self, vm_id: VmId) -> VmInstance {
        let vm = self.vms.remove(&vm_id).expect("removing known vm");
        if let Some(node) = self.nodes.get_mut(&vm.host) {
            node.remaining_cpu += vm.cpu_entitlement;
            node.remaining_mem += vm.mem_entitlement;
            node.hosted.retain(|v| *v != vm_id);
        }
        vm
    }

    /// Move a VM between hosts, shifting its entitlement charge.
    pub fn migrate_vm(&mut self, vm_id: VmId, to: NodeId) {
        let (from, cpu, mem) = {
            let vm = &self.vms[&vm_id];
            (vm.host, vm.cpu_entitlement, vm.mem_entitlement)
        };
        let src = self.nodes.get_mut(&from).expect("migrating from known node");
        src.remaining_cpu += cpu;
        src.remaining_mem += mem;
        src.hosted.retain(|v| *v != vm_id);
        let dst = self.nodes.get_mut(&to).expect("migrating to known node");
        dst.remaining_cpu -= cpu;
        dst.remaining_mem -= mem;
        dst.hosted.push(vm_id);
        let vm = self.vms.get_mut(&vm_id).expect("vm id was just read");
        vm.host = to;
        if self.tunables.migration_latency > 0.0 {
            vm.migrating_until = Some(self.now + self.tunables.migration_latency);
        }
    }

    /// All VMs serving a request, ascending by id.
    pub fn vms_of_request(&self, request: &RequestId) -> Vec<VmId> {
        self.vms
            .values()
            .filter(|vm| vm.request == *request)
            .map(|vm| vm.id)
            .collect()
    }

    /// Split a request's traffic evenly over all of its VMs.
    pub fn rebalance_shares(&mut self, request: &RequestId) {
        let ids = self.vms_of_request(request);
        if ids.is_empty() {
            return;
        }
        let share = 1.0 / ids.len() as f64;
        for id in ids {
            self.vms.get_mut(&id).expect("listed vm exists").traffic_share = share;
        }
    }

    /// Hand a removed VM's traffic share back: to the parent when it is
    /// still around, otherwise evenly to whatever VMs the request has left.
    pub fn return_share(&mut self, request: &RequestId, share: f64, parent: Option<VmId>) {
        if let Some(pid) = parent {
            if let Some(parent_vm) = self.vms.get_mut(&pid) {
                parent_vm.traffic_share += share;
                return;
            }
        }
        let ids = self.vms_of_request(request);
        if ids.is_empty() {
            return;
        }
        let split = share / ids.len() as f64;
        for id in ids {
            self.vms.get_mut(&id).expect("listed vm exists").traffic_share += split;
        }
    }

    /// Entries at table positions strictly after the pointer, nearest first.
    pub fn pool_positions(&self) -> Vec<usize> {
        match self.table.pointer() {
            Some(p) => ((p + 1)..self.table.len())
                .take(self.tunables.warm_pool_size)
                .collect(),
            None => Vec::new(),
        }
    }

    /// Snapshot everything a reference interpreter needs to replay one
    /// agent invocation.
    pub fn snapshot(&self) -> WorldSnapshot {
        let nodes = self
            .nodes
            .iter()
            .map(|(id, n)| {
                let (used_cpu, used_mem) = if n.hosted.is_empty() {
                    (0.0, 0.0)
                } else {
                    self.node_used(*id)
                };
                (
                    *id,
                    SnapshotNode {
                        cpu_capacity: n.cpu_capacity,
                        mem_capacity: n.mem_capacity,
                        cpu_peak_w: n.power.cpu_peak_w,
                        mem_peak_w: n.power.mem_peak_w,
                        state: n.state,
                        registered: n.registered,
                        responsive: n.responsive,
                        last_seen: n.last_seen,
                        hosted: n.hosted.clone(),
                        neighbors: n.neighbors.iter().copied().collect(),
                        remaining_cpu: n.remaining_cpu,
                        remaining_mem: n.remaining_mem,
                        used_cpu,
                        used_mem,
                    },
                )
            })
            .collect();
        let vms = self
            .vms
            .iter()
            .map(|(id, vm)| {
                let req = &self.requests[&vm.request];
                let (used_cpu, used_mem) = self.vm_used(vm);
                (
                    *id,
                    SnapshotVm {
                        request: vm.request.clone(),
                        host: vm.host,
                        cpu_entitlement: vm.cpu_entitlement,
                        mem_entitlement: vm.mem_entitlement,
                        used_cpu,
                        used_mem,
                        lambda: self.vm_lambda(vm),
                        mu: self.vm_mu(vm),
                        rate: self.trace_of(&vm.request).rate_at(self.now),
                        migrating: matches!(vm.migrating_until, Some(u) if self.now < u),
                        traffic_share: vm.traffic_share,
                        slam: vm.slam,
                        is_clone: vm.is_clone,
                        parent_vm: vm.parent_vm,
                        lease_expiry: vm.lease_expiry,
                        rtime_target: req.rtime_target,
                        thput_target: req.thput_target,
                        last_obs: vm.last_obs.map(|o| (o.rtime_s, o.thput)),
                    },
                )
            })
            .collect();
        WorldSnapshot {
            now: self.now,
            table_order: self.table.entries().iter().map(|e| e.node).collect(),
            pointer: self.table.pointer(),
            nodes,
            vms,
            queue: self.controller.queue.iter().cloned().collect(),
            next_vm_id: self.next_vm_id,
            tunables: self.tunables,
            warned: self.controller.warned.iter().cloned().collect(),
            pool_noted: self.controller.pool_noted.iter().copied().collect(),
        }
    }
}

/// Frozen per-node view inside a [`WorldSnapshot`].
#[derive(Debug, Clone)]
pub struct SnapshotNode {
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub cpu_peak_w: f64,
    pub mem_peak_w: f64,
    pub state: NodeState,
    pub registered: bool,
    pub responsive: bool,
    pub last_seen: f64,
    pub hosted: Vec<VmId>,
    pub neighbors: Vec<NodeId>,
    pub remaining_cpu: f64,
    pub remaining_mem: f64,
    pub used_cpu: f64,
    pub used_mem: f64,
}

/// Frozen per-VM view inside a [`WorldSnapshot`].
#[derive(Debug, Clone)]
pub struct SnapshotVm {
    pub request: RequestId,
    pub host: NodeId,
    pub cpu_entitlement: f64,
    pub mem_entitlement: f64,
    pub used_cpu: f64,
    pub used_mem: f64,
    pub lambda: f64,
    pub mu: f64,
    /// The request's full offered rate, before the traffic-share split.
    pub rate: f64,
    pub migrating: bool,
    pub traffic_share: f64,
    pub slam: SlamCode,
    pub is_clone: bool,
    pub parent_vm: Option<VmId>,
    pub lease_expiry: f64,
    pub rtime_target: f64,
    pub thput_target: f64,
    pub last_obs: Option<(f64, f64)>,
}

/// Everything an agent invocation reads, captured just before it runs.
#[derive(Debug, Clone)]
pub struct WorldSnapshot {
    pub now: f64,
    pub table_order: Vec<NodeId>,
    pub pointer: Option<usize>,
    pub nodes: BTreeMap<NodeId, SnapshotNode>,
    pub vms: BTreeMap<VmId, SnapshotVm>,
    pub queue: Vec<RequestId>,
    pub next_vm_id: u64,
    pub tunables: Tunables,
    pub warned: Vec<RequestId>,
    pub pool_noted: Vec<usize>,
}
