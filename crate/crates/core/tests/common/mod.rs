//! Shared test support: an independently formulated service-verdict
//! classifier, a straight-line shadow interpreter that replays recorded
//! agent invocations from their pre-invocation snapshots, and a randomized
//! scenario generator.
//!
//! The shadow interpreter deliberately re-implements the decision rules in
//! the plainest possible style — explicit loops over a frozen copy of the
//! state — so a disagreement with the production modules points at real
//! behavioral drift rather than at shared code.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use antcloud::config::{parse_scenario, Scenario};
use antcloud::domain::{NodeId, NodeState, RequestId, SlamCode, VmId};
use antcloud::engine::{ColonyOp, Engine, RunOutput};
use antcloud::sla::{SlaObservation, SlamThresholds};
use antcloud::world::{
    Action, AdminReason, MigrateReason, StateReason, Tunables, WorldSnapshot,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

// ---------------------------------------------------------------------------
// Independent verdict classifier
// ---------------------------------------------------------------------------

/// Classify each metric into a band (0 fine, 1 warning, 2 critical), then
/// look the verdict up in a 3x3 matrix indexed `[rtime_band][thput_band]`.
///
/// Response-time pressure calls for cloning, throughput pressure for
/// migration, and a critical band on either metric beats warnings on both.
/// This is a different formulation from the production short-circuit chain
/// on purpose: agreement across the whole input space is what the tests
/// check.
pub fn band_matrix_verdict(
    rtime_target: f64,
    thput_target: f64,
    obs: &SlaObservation,
    th: &SlamThresholds,
) -> SlamCode {
    let rtime_band = if obs.rtime_s >= th.rtime_critical * rtime_target {
        2
    } else if obs.rtime_s >= th.rtime_ok * rtime_target {
        1
    } else {
        0
    };
    let thput_band = if obs.thput <= th.thput_critical * thput_target {
        2
    } else if obs.thput <= th.thput_ok * thput_target {
        1
    } else {
        0
    };
    let matrix = [
        [
            SlamCode::Ok,
            SlamCode::RecommendMigrate,
            SlamCode::CriticalMigrate,
        ],
        [
            SlamCode::RecommendClone,
            SlamCode::RecommendClone,
            SlamCode::CriticalMigrate,
        ],
        [
            SlamCode::CriticalClone,
            SlamCode::CriticalClone,
            SlamCode::CriticalClone,
        ],
    ];
    matrix[rtime_band][thput_band]
}

/// Queue-model observation recomputed from first principles, used by the
/// shadow interpreter so its verdicts do not lean on the production module.
pub fn observe_ref(lambda: f64, mu: f64, saturation_rtime: f64) -> (f64, f64) {
    let thput = if lambda == 0.0 {
        1.0
    } else {
        lambda.min(mu) / lambda
    };
    let rtime_s = if lambda < mu {
        (1.0 / (mu - lambda)).min(saturation_rtime)
    } else {
        saturation_rtime
    };
    (rtime_s, thput)
}

// ---------------------------------------------------------------------------
// Shadow interpreter
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
struct ShadowNode {
    cpu_capacity: f64,
    mem_capacity: f64,
    cpu_peak_w: f64,
    mem_peak_w: f64,
    state: NodeState,
    registered: bool,
    responsive: bool,
    last_seen: f64,
    hosted: Vec<VmId>,
    neighbors: Vec<NodeId>,
    remaining_cpu: f64,
    remaining_mem: f64,
}

#[derive(Debug, Clone)]
struct ShadowVm {
    request: RequestId,
    host: NodeId,
    cpu_entitlement: f64,
    mem_entitlement: f64,
    traffic_share: f64,
    /// The request's full offered rate; the VM's arrival rate is
    /// `traffic_share * rate`, or zero while migrating.
    rate: f64,
    mu: f64,
    migrating: bool,
    slam: SlamCode,
    last_obs: Option<(f64, f64)>,
    is_clone: bool,
    parent_vm: Option<VmId>,
    lease_expiry: f64,
    rtime_target: f64,
    thput_target: f64,
}

/// A mutable mini-state reconstructed from a [`WorldSnapshot`], advanced by
/// the reference interpreters below.
pub struct Shadow {
    now: f64,
    order: Vec<NodeId>,
    pointer: Option<usize>,
    nodes: BTreeMap<NodeId, ShadowNode>,
    vms: BTreeMap<VmId, ShadowVm>,
    queue: Vec<RequestId>,
    next_vm_id: u64,
    t: Tunables,
    warned: BTreeSet<RequestId>,
    pool_noted: BTreeSet<usize>,
    acts: Vec<Action>,
}

impl Shadow {
    fn new(s: &WorldSnapshot) -> Self {
        let nodes = s
            .nodes
            .iter()
            .map(|(id, n)| {
                (
                    *id,
                    ShadowNode {
                        cpu_capacity: n.cpu_capacity,
                        mem_capacity: n.mem_capacity,
                        cpu_peak_w: n.cpu_peak_w,
                        mem_peak_w: n.mem_peak_w,
                        state: n.state,
                        registered: n.registered,
                        responsive: n.responsive,
                        last_seen: n.last_seen,
                        hosted: n.hosted.clone(),
                        neighbors: n.neighbors.clone(),
                        remaining_cpu: n.remaining_cpu,
                        remaining_mem: n.remaining_mem,
                    },
                )
            })
            .collect();
        let vms = s
            .vms
            .iter()
            .map(|(id, v)| {
                (
                    *id,
                    ShadowVm {
                        request: v.request.clone(),
                        host: v.host,
                        cpu_entitlement: v.cpu_entitlement,
                        mem_entitlement: v.mem_entitlement,
                        traffic_share: v.traffic_share,
                        rate: v.rate,
                        mu: v.mu,
                        migrating: v.migrating,
                        slam: v.slam,
                        last_obs: v.last_obs,
                        is_clone: v.is_clone,
                        parent_vm: v.parent_vm,
                        lease_expiry: v.lease_expiry,
                        rtime_target: v.rtime_target,
                        thput_target: v.thput_target,
                    },
                )
            })
            .collect();
        Shadow {
            now: s.now,
            order: s.table_order.clone(),
            pointer: s.pointer,
            nodes,
            vms,
            queue: s.queue.clone(),
            next_vm_id: s.next_vm_id,
            t: s.tunables,
            warned: s.warned.iter().cloned().collect(),
            pool_noted: s.pool_noted.iter().copied().collect(),
            acts: Vec::new(),
        }
    }

    // -- derived quantities -------------------------------------------------

    fn vm_used(&self, vm: &ShadowVm) -> (f64, f64) {
        let lambda = if vm.migrating {
            0.0
        } else {
            vm.traffic_share * vm.rate
        };
        let rho = (lambda / vm.mu).min(1.0);
        (vm.cpu_entitlement * rho, vm.mem_entitlement * rho)
    }

    fn node_used(&self, id: NodeId) -> (f64, f64) {
        // Sum in hosted order: float addition is order-sensitive and the
        // production side iterates the same list.
        let mut cpu = 0.0;
        let mut mem = 0.0;
        for vm_id in &self.nodes[&id].hosted {
            let (c, m) = self.vm_used(&self.vms[vm_id]);
            cpu += c;
            mem += m;
        }
        (cpu, mem)
    }

    fn node_utilization(&self, id: NodeId) -> (f64, f64) {
        let node = &self.nodes[&id];
        let (cpu, mem) = self.node_used(id);
        (cpu / node.cpu_capacity, mem / node.mem_capacity)
    }

    fn vm_load_scalar(&self, vm: &ShadowVm) -> f64 {
        let node = &self.nodes[&vm.host];
        let (cpu, mem) = self.vm_used(vm);
        (cpu / node.cpu_capacity).max(mem / node.mem_capacity)
    }

    fn refresh_vm(&mut self, vm_id: VmId) {
        let vm = &self.vms[&vm_id];
        assert!(
            !vm.mu.is_nan(),
            "replay measured a VM created mid-invocation"
        );
        let lambda = if vm.migrating {
            0.0
        } else {
            vm.traffic_share * vm.rate
        };
        let (rtime_s, thput) = observe_ref(lambda, vm.mu, self.t.saturation_rtime);
        let obs = SlaObservation {
            rtime_s,
            thput,
            offered_rate: lambda,
        };
        let verdict = band_matrix_verdict(vm.rtime_target, vm.thput_target, &obs, &self.t.slam);
        let vm = self.vms.get_mut(&vm_id).expect("vm present");
        vm.last_obs = Some((rtime_s, thput));
        vm.slam = verdict;
    }

    // -- bookkeeping mutators -----------------------------------------------

    fn set_state(&mut self, id: NodeId, to: NodeState, reason: StateReason) {
        let node = self.nodes.get_mut(&id).expect("node present");
        let from = node.state;
        node.state = to;
        self.acts.push(Action::StateChange {
            node: id,
            from,
            to,
            reason,
        });
    }

    fn notify_admin(&mut self, reason: AdminReason) {
        self.acts.push(Action::NotifyAdmin { reason });
    }

    fn place_vm(&mut self, id: VmId, vm: ShadowVm) {
        let node = self.nodes.get_mut(&vm.host).expect("host present");
        node.remaining_cpu -= vm.cpu_entitlement;
        node.remaining_mem -= vm.mem_entitlement;
        node.hosted.push(id);
        self.vms.insert(id, vm);
    }

    fn remove_vm_record(&mut self, vm_id: VmId) -> ShadowVm {
        let vm = self.vms.remove(&vm_id).expect("vm present");
        if let Some(node) = self.nodes.get_mut(&vm.host) {
            node.remaining_cpu += vm.cpu_entitlement;
            node.remaining_mem += vm.mem_entitlement;
            node.hosted.retain(|v| *v != vm_id);
        }
        vm
    }

    fn migrate_vm(&mut self, vm_id: VmId, to: NodeId) {
        let (from, cpu, mem) = {
            let vm = &self.vms[&vm_id];
            (vm.host, vm.cpu_entitlement, vm.mem_entitlement)
        };
        let src = self.nodes.get_mut(&from).expect("source present");
        src.remaining_cpu += cpu;
        src.remaining_mem += mem;
        src.hosted.retain(|v| *v != vm_id);
        let dst = self.nodes.get_mut(&to).expect("target present");
        dst.remaining_cpu -= cpu;
        dst.remaining_mem -= mem;
        dst.hosted.push(vm_id);
        let vm = self.vms.get_mut(&vm_id).expect("vm present");
        vm.host = to;
        if self.t.migration_latency > 0.0 {
            vm.migrating = true;
        }
    }

    fn vms_of_request(&self, request: &RequestId) -> Vec<VmId> {
        self.vms
            .iter()
            .filter(|(_, v)| v.request == *request)
            .map(|(id, _)| *id)
            .collect()
    }

    fn rebalance_shares(&mut self, request: &RequestId) {
        let ids = self.vms_of_request(request);
        if ids.is_empty() {
            return;
        }
        let share = 1.0 / ids.len() as f64;
        for id in ids {
            self.vms.get_mut(&id).expect("vm present").traffic_share = share;
        }
    }

    fn return_share(&mut self, request: &RequestId, share: f64, parent: Option<VmId>) {
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
            self.vms.get_mut(&id).expect("vm present").traffic_share += split;
        }
    }

    // -- allocation table ---------------------------------------------------

    fn pointer_node(&self) -> Option<NodeId> {
        self.pointer.map(|i| self.order[i])
    }

    fn advance(&mut self) -> Option<NodeId> {
        match self.pointer {
            Some(i) if i + 1 < self.order.len() => {
                self.pointer = Some(i + 1);
                Some(self.order[i + 1])
            }
            _ => {
                self.pointer = None;
                None
            }
        }
    }

    fn sorted_order(&self, ids: &[NodeId]) -> Vec<NodeId> {
        let mut max_ppw = 0.0f64;
        let mut max_mpw = 0.0f64;
        let mut figures = Vec::with_capacity(ids.len());
        for id in ids {
            let n = &self.nodes[id];
            let ppw = n.cpu_capacity / n.cpu_peak_w;
            let mpw = n.mem_capacity / n.mem_peak_w;
            max_ppw = max_ppw.max(ppw);
            max_mpw = max_mpw.max(mpw);
            figures.push((*id, ppw, mpw));
        }
        let norm = |v: f64, max: f64| if max > 0.0 { v / max } else { 0.0 };
        let w = self.t.sort_weights;
        let mut keyed: Vec<(NodeId, f64)> = figures
            .into_iter()
            .map(|(id, ppw, mpw)| {
                (id, w.ppw * norm(ppw, max_ppw) + w.mpw * norm(mpw, max_mpw))
            })
            .collect();
        keyed.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("keys are finite")
                .then(a.0.cmp(&b.0))
        });
        keyed.into_iter().map(|(id, _)| id).collect()
    }

    fn table_register(&mut self, id: NodeId) {
        let anchored = self.pointer_node();
        let mut ids = self.order.clone();
        ids.push(id);
        self.order = self.sorted_order(&ids);
        self.pointer = match anchored {
            Some(n) => self.order.iter().position(|x| *x == n),
            None if self.order.len() == 1 => Some(0),
            None => None,
        };
    }

    fn table_remove(&mut self, id: NodeId) {
        let Some(pos) = self.order.iter().position(|x| *x == id) else {
            return;
        };
        let anchored = match self.pointer_node() {
            Some(n) if n == id => self.order.get(pos + 1).copied(),
            other => other,
        };
        let ids: Vec<NodeId> = self.order.iter().copied().filter(|n| *n != id).collect();
        self.order = self.sorted_order(&ids);
        self.pointer = anchored.and_then(|n| self.order.iter().position(|x| *x == n));
    }

    // -- admission and warm pool ---------------------------------------------

    fn fits(&self, node: NodeId, need: (f64, f64)) -> bool {
        let n = &self.nodes[&node];
        n.remaining_cpu >= need.0 && n.remaining_mem >= need.1
    }

    fn deploy(&mut self, request: &RequestId, node: NodeId) {
        let vm_id = VmId(self.next_vm_id);
        self.next_vm_id += 1;
        let vm = ShadowVm {
            request: request.clone(),
            host: node,
            cpu_entitlement: self.t.basic_vm_cpu,
            mem_entitlement: self.t.basic_vm_mem,
            traffic_share: 1.0,
            // Placeholders: a VM born during the replayed invocation is
            // never measured within that same invocation, and reading NaN
            // trips the refresh assertion if that ever changes.
            rate: f64::NAN,
            mu: f64::NAN,
            migrating: false,
            slam: SlamCode::Ok,
            last_obs: None,
            is_clone: false,
            parent_vm: None,
            lease_expiry: f64::NAN,
            rtime_target: f64::NAN,
            thput_target: f64::NAN,
        };
        self.place_vm(vm_id, vm);
        self.acts.push(Action::Deploy {
            request: request.clone(),
            vm: vm_id,
            node,
        });
    }

    fn ref_worker(&mut self, request: &RequestId) {
        let need = (self.t.basic_vm_cpu, self.t.basic_vm_mem);
        let Some(first) = self.pointer_node() else {
            self.notify_admin(AdminReason::ResourceScarcity);
            self.acts.push(Action::Reject {
                request: request.clone(),
            });
            return;
        };
        if self.fits(first, need) {
            self.deploy(request, first);
            return;
        }
        let target = self.advance();
        self.acts.push(Action::AdvancePointer { to: target });
        let Some(next) = target else {
            self.notify_admin(AdminReason::ResourceScarcity);
            self.acts.push(Action::Reject {
                request: request.clone(),
            });
            return;
        };
        if self.nodes[&next].state != NodeState::Active {
            self.set_state(next, NodeState::Active, StateReason::AllocationWake);
        }
        if self.fits(next, need) {
            self.deploy(request, next);
        } else {
            self.acts.push(Action::Reject {
                request: request.clone(),
            });
        }
    }

    fn ref_pool(&mut self) {
        let Some(p) = self.pointer else { return };
        let pool: Vec<usize> = ((p + 1)..self.order.len())
            .take(self.t.warm_pool_size)
            .collect();
        for idx in &pool {
            let node = self.order[*idx];
            if self.nodes[&node].state == NodeState::Off {
                self.set_state(node, NodeState::Standby, StateReason::PoolFill);
            }
        }
        let beyond = p + 1 + self.t.warm_pool_size;
        for idx in beyond..self.order.len() {
            let node = self.order[idx];
            let sleeping_idle = {
                let n = &self.nodes[&node];
                n.state == NodeState::Standby && n.hosted.is_empty()
            };
            if sleeping_idle {
                self.set_state(node, NodeState::Off, StateReason::PoolRelease);
            }
        }
        if pool.len() < self.t.warm_pool_size && !self.pool_noted.contains(&p) {
            self.pool_noted.insert(p);
            self.notify_admin(AdminReason::FewResources);
        }
    }

    // -- tester ---------------------------------------------------------------

    fn ref_tester(&mut self, node_id: NodeId) {
        {
            let Some(node) = self.nodes.get_mut(&node_id) else {
                return;
            };
            if !node.registered || !node.responsive {
                return;
            }
            node.last_seen = self.now;
            if node.state != NodeState::Active {
                return;
            }
        }
        let hosted: Vec<VmId> = self.nodes[&node_id].hosted.clone();
        for vm in &hosted {
            self.refresh_vm(*vm);
        }
        let (u_cpu, u_mem) = self.node_utilization(node_id);
        if u_cpu > self.t.overload_util || u_mem > self.t.overload_util {
            let mut ranked: Vec<(f64, VmId)> = hosted
                .iter()
                .map(|v| (self.vm_load_scalar(&self.vms[v]), *v))
                .collect();
            ranked.sort_by(|a, b| {
                b.0.partial_cmp(&a.0)
                    .expect("loads are finite")
                    .then(a.1.cmp(&b.1))
            });
            for (_, vm) in &ranked {
                if self.vms[vm].slam.is_critical() {
                    self.ref_handle_critical(*vm);
                }
            }
            for (_, vm) in &ranked {
                if self.vms[vm].slam.is_recommended() {
                    self.ref_handle_recommended(*vm);
                }
            }
        } else if u_cpu < self.t.consolidate_util
            && u_mem < self.t.consolidate_util
            && self.pointer_node() != Some(node_id)
        {
            self.ref_consolidate(node_id);
        }
    }

    fn clone_need(&self, used: (f64, f64)) -> (f64, f64) {
        (
            (self.t.clone_fraction * used.0).max(self.t.clone_floor),
            (self.t.clone_fraction * used.1).max(self.t.clone_floor),
        )
    }

    fn migrate_need(&self, vm: &ShadowVm, used: (f64, f64)) -> (f64, f64) {
        (
            (self.t.migrate_headroom * used.0).max(vm.cpu_entitlement),
            (self.t.migrate_headroom * used.1).max(vm.mem_entitlement),
        )
    }

    fn find_relief(&self, exclude: NodeId, need: (f64, f64)) -> Option<usize> {
        self.order.iter().position(|id| {
            if *id == exclude {
                return false;
            }
            let n = &self.nodes[id];
            n.responsive
                && matches!(n.state, NodeState::Active | NodeState::Standby)
                && n.remaining_cpu >= need.0
                && n.remaining_mem >= need.1
        })
    }

    fn ref_spawn_clone(&mut self, parent_id: VmId, node: NodeId, need: (f64, f64)) {
        let clone_id = VmId(self.next_vm_id);
        self.next_vm_id += 1;
        let parent = self.vms[&parent_id].clone();
        self.acts.push(Action::CloneVm {
            parent: parent_id,
            clone: clone_id,
            node,
            cpu: need.0,
            mem: need.1,
        });
        if self.nodes[&node].state == NodeState::Standby {
            self.set_state(node, NodeState::Active, StateReason::CriticalWake);
        }
        self.place_vm(
            clone_id,
            ShadowVm {
                request: parent.request.clone(),
                host: node,
                cpu_entitlement: need.0,
                mem_entitlement: need.1,
                traffic_share: 0.0,
                rate: parent.rate,
                // Never measured within the same invocation; see deploy().
                mu: f64::NAN,
                migrating: false,
                slam: SlamCode::Ok,
                last_obs: None,
                is_clone: true,
                parent_vm: Some(parent_id),
                lease_expiry: parent.lease_expiry,
                rtime_target: parent.rtime_target,
                thput_target: parent.thput_target,
            },
        );
        self.rebalance_shares(&parent.request);
    }

    fn ref_handle_critical(&mut self, vm_id: VmId) {
        let vm = self.vms[&vm_id].clone();
        let used = self.vm_used(&vm);
        match vm.slam {
            SlamCode::CriticalClone => {
                let need = self.clone_need(used);
                let Some(idx) = self.find_relief(vm.host, need) else {
                    self.notify_admin(AdminReason::ResourceScarcity);
                    return;
                };
                let target = self.order[idx];
                self.ref_spawn_clone(vm_id, target, need);
                let next_off = self.order[idx + 1..].iter().copied().find(|n| {
                    let node = &self.nodes[n];
                    node.state == NodeState::Off && node.responsive
                });
                match next_off {
                    Some(off_node) => {
                        self.set_state(off_node, NodeState::Standby, StateReason::PoolReplenish)
                    }
                    None => self.notify_admin(AdminReason::FewResources),
                }
            }
            SlamCode::CriticalMigrate => {
                let need = self.migrate_need(&vm, used);
                if let Some(idx) = self.find_relief(vm.host, need) {
                    let target = self.order[idx];
                    if self.nodes[&target].state == NodeState::Standby {
                        self.set_state(target, NodeState::Active, StateReason::CriticalWake);
                    }
                    self.migrate_vm(vm_id, target);
                    self.acts.push(Action::Migrate {
                        vm: vm_id,
                        from: vm.host,
                        to: target,
                        reason: MigrateReason::Critical,
                    });
                    return;
                }
                let need = self.clone_need(used);
                if let Some(idx) = self.find_relief(vm.host, need) {
                    let target = self.order[idx];
                    self.ref_spawn_clone(vm_id, target, need);
                } else {
                    self.notify_admin(AdminReason::ResourceScarcity);
                }
            }
            _ => {}
        }
    }

    fn ref_handle_recommended(&mut self, vm_id: VmId) {
        let vm = self.vms[&vm_id].clone();
        let host_idx = self
            .order
            .iter()
            .position(|n| *n == vm.host)
            .expect("hosting node is in the table");
        let used = self.vm_used(&vm);
        let find_above = |s: &Shadow, need: (f64, f64)| -> Option<NodeId> {
            s.order[..host_idx].iter().copied().find(|n| {
                let node = &s.nodes[n];
                node.registered
                    && node.responsive
                    && node.state == NodeState::Active
                    && node.remaining_cpu >= need.0
                    && node.remaining_mem >= need.1
            })
        };
        match vm.slam {
            SlamCode::RecommendMigrate => {
                let need = self.migrate_need(&vm, used);
                if let Some(target) = find_above(self, need) {
                    self.migrate_vm(vm_id, target);
                    self.acts.push(Action::Migrate {
                        vm: vm_id,
                        from: vm.host,
                        to: target,
                        reason: MigrateReason::Recommended,
                    });
                }
            }
            SlamCode::RecommendClone => {
                let need = self.clone_need(used);
                if let Some(target) = find_above(self, need) {
                    self.ref_spawn_clone(vm_id, target, need);
                }
            }
            _ => {}
        }
    }

    fn ref_consolidate(&mut self, node_id: NodeId) {
        let my_idx = self
            .order
            .iter()
            .position(|n| *n == node_id)
            .expect("visited node is in the table");
        let mut targets: Vec<(NodeId, f64, f64)> = self.order[..my_idx]
            .iter()
            .filter(|n| {
                let node = &self.nodes[n];
                node.registered && node.responsive && node.state == NodeState::Active
            })
            .map(|n| {
                let node = &self.nodes[n];
                (*n, node.remaining_cpu, node.remaining_mem)
            })
            .collect();
        targets.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .expect("capacity is finite")
                .then(b.2.partial_cmp(&a.2).expect("capacity is finite"))
                .then(a.0.cmp(&b.0))
        });
        let hosted: Vec<VmId> = self.nodes[&node_id].hosted.clone();
        let mut plan: Vec<(VmId, NodeId)> = Vec::new();
        for vm_id in &hosted {
            let vm = &self.vms[vm_id];
            let need = (vm.cpu_entitlement, vm.mem_entitlement);
            let Some(slot) = targets
                .iter_mut()
                .find(|(_, cpu, mem)| *cpu >= need.0 && *mem >= need.1)
            else {
                return;
            };
            slot.1 -= need.0;
            slot.2 -= need.1;
            plan.push((*vm_id, slot.0));
        }
        for (vm_id, target) in plan {
            let from = self.vms[&vm_id].host;
            self.migrate_vm(vm_id, target);
            self.acts.push(Action::Migrate {
                vm: vm_id,
                from,
                to: target,
                reason: MigrateReason::Consolidation,
            });
        }
        self.set_state(node_id, NodeState::Standby, StateReason::ConsolidateSleep);
        let last_standby = self.order.iter().rev().copied().find(|n| {
            let node = &self.nodes[n];
            node.state == NodeState::Standby && node.responsive
        });
        if let Some(last) = last_standby {
            self.set_state(last, NodeState::Off, StateReason::TailOff);
        }
    }

    // -- scout ------------------------------------------------------------------

    fn ref_scout(&mut self, node_id: NodeId) {
        {
            let Some(node) = self.nodes.get_mut(&node_id) else {
                return;
            };
            if !node.registered || !node.responsive {
                return;
            }
            node.last_seen = self.now;
        }
        let discovered: Vec<NodeId> = self.nodes[&node_id]
            .neighbors
            .iter()
            .filter(|n| {
                self.nodes
                    .get(n)
                    .map(|m| !m.registered && m.responsive && m.state != NodeState::Failed)
                    .unwrap_or(false)
            })
            .copied()
            .collect();
        for id in discovered {
            {
                let m = self.nodes.get_mut(&id).expect("node present");
                m.registered = true;
                m.state = NodeState::Standby;
                m.last_seen = self.now;
            }
            self.table_register(id);
            self.acts.push(Action::RegisterNode { node: id });
        }
    }

    // -- cleaner ------------------------------------------------------------------

    fn parent_peak(&self, vm: &ShadowVm) -> f64 {
        vm.parent_vm
            .and_then(|p| self.vms.get(&p))
            .map(|parent| {
                let (u_cpu, u_mem) = self.node_utilization(parent.host);
                u_cpu.max(u_mem)
            })
            .unwrap_or(0.0)
    }

    fn ref_cleaner(&mut self, node_id: NodeId) {
        self.ref_detect_failures();
        {
            let Some(node) = self.nodes.get(&node_id) else {
                return;
            };
            if !node.registered || !node.responsive || node.state != NodeState::Active {
                return;
            }
        }

        // Pass 1: clones whose measured use has fallen to nothing.
        for vm_id in self.nodes[&node_id].hosted.clone() {
            let vm = self.vms[&vm_id].clone();
            if !vm.is_clone {
                continue;
            }
            let (used_cpu, _) = self.vm_used(&vm);
            if used_cpu < self.t.nil_epsilon && self.parent_peak(&vm) < self.t.overload_util {
                let removed = self.remove_vm_record(vm_id);
                self.acts.push(Action::RemoveClone {
                    clone: vm_id,
                    node: node_id,
                });
                self.return_share(&removed.request, removed.traffic_share, removed.parent_vm);
            }
        }

        // Pass 2: clones comfortably beating both targets while the parent
        // host is no longer pressed.
        for vm_id in self.nodes[&node_id].hosted.clone() {
            let Some(vm) = self.vms.get(&vm_id) else {
                continue;
            };
            let vm = vm.clone();
            if !vm.is_clone {
                continue;
            }
            let Some((rtime_s, thput)) = vm.last_obs else {
                continue;
            };
            if rtime_s <= self.t.perf_excess_rtime * vm.rtime_target
                && thput >= self.t.perf_excess_thput * vm.thput_target
                && self.parent_peak(&vm) < self.t.overload_util
            {
                let removed = self.remove_vm_record(vm_id);
                self.acts.push(Action::RemoveClone {
                    clone: vm_id,
                    node: node_id,
                });
                self.return_share(&removed.request, removed.traffic_share, removed.parent_vm);
            }
        }

        // Pass 3: lease-expiry warnings, once per request.
        for vm_id in self.nodes[&node_id].hosted.clone() {
            let Some(vm) = self.vms.get(&vm_id) else {
                continue;
            };
            let remaining = vm.lease_expiry - self.now;
            if remaining > 0.0
                && remaining <= self.t.lease_warning_window
                && !self.warned.contains(&vm.request)
            {
                let request = vm.request.clone();
                self.warned.insert(request.clone());
                self.acts.push(Action::NotifyUser { request });
            }
        }

        // Pass 4: expired leases.
        for vm_id in self.nodes[&node_id].hosted.clone() {
            let Some(vm) = self.vms.get(&vm_id) else {
                continue;
            };
            if vm.lease_expiry <= self.now {
                let removed = self.remove_vm_record(vm_id);
                if removed.is_clone {
                    self.acts.push(Action::RemoveClone {
                        clone: vm_id,
                        node: node_id,
                    });
                } else {
                    self.acts.push(Action::RemoveVm {
                        vm: vm_id,
                        node: node_id,
                    });
                }
                self.return_share(&removed.request, removed.traffic_share, None);
            }
        }
    }

    fn ref_detect_failures(&mut self) {
        let ids: Vec<NodeId> = self
            .nodes
            .iter()
            .filter(|(_, n)| n.registered)
            .map(|(id, _)| *id)
            .collect();
        for id in ids {
            if self.nodes[&id].responsive {
                self.nodes.get_mut(&id).expect("node present").last_seen = self.now;
                continue;
            }
            if self.now - self.nodes[&id].last_seen < self.t.failure_timeout {
                continue;
            }
            {
                let n = self.nodes.get_mut(&id).expect("node present");
                n.state = NodeState::Failed;
                n.registered = false;
            }
            self.acts.push(Action::MarkFailed { node: id });
            for vm_id in self.nodes[&id].hosted.clone() {
                let Some(vm) = self.vms.get(&vm_id) else {
                    continue;
                };
                let vm = vm.clone();
                if vm.is_clone {
                    let removed = self.remove_vm_record(vm_id);
                    self.acts.push(Action::RemoveClone {
                        clone: vm_id,
                        node: id,
                    });
                    self.return_share(&removed.request, removed.traffic_share, removed.parent_vm);
                } else {
                    let clone_ids: Vec<VmId> = self
                        .vms
                        .iter()
                        .filter(|(_, v)| v.parent_vm == Some(vm_id))
                        .map(|(cid, _)| *cid)
                        .collect();
                    for cid in clone_ids {
                        let c = self.remove_vm_record(cid);
                        self.acts.push(Action::RemoveClone {
                            clone: cid,
                            node: c.host,
                        });
                    }
                    let removed = self.remove_vm_record(vm_id);
                    self.acts.push(Action::RemoveVm { vm: vm_id, node: id });
                    if !self.queue.contains(&removed.request) {
                        self.queue.insert(0, removed.request);
                    }
                }
            }
            self.table_remove(id);
            if let Some(pn) = self.pointer_node() {
                if self.nodes[&pn].state != NodeState::Active {
                    self.set_state(pn, NodeState::Active, StateReason::AllocationWake);
                }
            }
        }
    }
}

/// Replay one recorded invocation from its pre-invocation snapshot and
/// return the actions the reference interpreter takes.
pub fn replay(op: &ColonyOp, before: &WorldSnapshot) -> Vec<Action> {
    let mut shadow = Shadow::new(before);
    match op {
        ColonyOp::Worker { request } => shadow.ref_worker(request),
        ColonyOp::PoolMaintain => shadow.ref_pool(),
        ColonyOp::TesterVisit { node } => shadow.ref_tester(*node),
        ColonyOp::CleanerVisit { node } => shadow.ref_cleaner(*node),
        ColonyOp::ScoutVisit { node } => shadow.ref_scout(*node),
    }
    shadow.acts
}

// ---------------------------------------------------------------------------
// Randomized scenario generation
// ---------------------------------------------------------------------------

/// Deterministic pseudo-random scenario text. Scenarios stay small — at
/// most ten nodes and a few dozen scheduled events — but reach every
/// behavior: stepped and cyclic load, short leases, node failures, late
/// joins, and occasional migration latency.
pub fn random_scenario_toml(seed: u64) -> String {
    let mut rng = StdRng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(1));
    let n_nodes: usize = rng.gen_range(3..=8);
    let horizon = [300.0, 600.0, 900.0][rng.gen_range(0..3usize)];
    let n_workloads: usize = rng.gen_range(1..=3);
    let n_requests: usize = rng.gen_range(2..=5);

    let mut out = String::new();
    let _ = writeln!(out, "[scenario]");
    let _ = writeln!(out, "name = \"fuzz-{seed}\"");
    let _ = writeln!(out, "seed = {seed}");
    let _ = writeln!(out, "horizon_s = {horizon:?}");
    let _ = writeln!(out, "policy = \"ant\"");
    let _ = writeln!(out, "sample_interval_s = 60.0");
    let _ = writeln!(out);

    if rng.gen_bool(0.3) {
        let overload = rng.gen_range(85..=95) as f64 / 100.0;
        let consolidate = rng.gen_range(30..=50) as f64 / 100.0;
        let pool: usize = rng.gen_range(1..=3);
        let timeout = rng.gen_range(30..=90) as f64;
        let latency = if rng.gen_bool(0.25) {
            rng.gen_range(5..=20) as f64
        } else {
            0.0
        };
        let _ = writeln!(out, "[tunables]");
        let _ = writeln!(out, "overload_util = {overload:?}");
        let _ = writeln!(out, "consolidate_util = {consolidate:?}");
        let _ = writeln!(out, "warm_pool_size = {pool}");
        let _ = writeln!(out, "failure_timeout_s = {timeout:?}");
        let _ = writeln!(out, "migration_latency_s = {latency:?}");
        let _ = writeln!(out);
    }

    if rng.gen_bool(0.3) {
        let hop = rng.gen_range(10..=30) as f64;
        let spawn = rng.gen_range(45..=90) as f64;
        let _ = writeln!(out, "[ants.tester]");
        let _ = writeln!(out, "hop_interval_s = {hop:?}");
        let _ = writeln!(out, "spawn_period_s = {spawn:?}");
        let _ = writeln!(out);
    }

    let emit_power = |out: &mut String, rng: &mut StdRng| {
        let base = rng.gen_range(40..=120) as f64;
        let cpu_peak = rng.gen_range(60..=220) as f64;
        let mem_peak = rng.gen_range(5..=30) as f64;
        let standby = (base * 0.1).max(1.0);
        let wake = rng.gen_range(0..=20) as f64;
        let boot = rng.gen_range(10..=60) as f64;
        let _ = write!(
            out,
            "power = {{ base_w = {base:?}, cpu_peak_w = {cpu_peak:?}, mem_peak_w = {mem_peak:?}, \
             standby_w = {standby:?}, wake_latency_s = {wake:?}, boot_latency_s = {boot:?} }}"
        );
    };

    let cap_choices = [2.0, 3.0, 4.0, 6.0, 8.0];
    for i in 0..n_nodes {
        let cpu = cap_choices[rng.gen_range(0..cap_choices.len())];
        let mem = cap_choices[rng.gen_range(0..cap_choices.len())];
        let mut neighbors: Vec<u64> = vec![((i + 1) % n_nodes) as u64];
        if rng.gen_bool(0.4) {
            let chord = rng.gen_range(0..n_nodes);
            if chord != i && !neighbors.contains(&(chord as u64)) {
                neighbors.push(chord as u64);
            }
        }
        let _ = writeln!(out, "[[nodes]]");
        let _ = writeln!(out, "id = {i}");
        let _ = writeln!(out, "cpu_capacity = {cpu:?}");
        let _ = writeln!(out, "mem_capacity = {mem:?}");
        let _ = writeln!(out, "neighbors = {neighbors:?}");
        emit_power(&mut out, &mut rng);
        let _ = writeln!(out);
        let _ = writeln!(out);
    }

    for w in 0..n_workloads {
        let demand = rng.gen_range(5..=25) as f64 / 100.0;
        let _ = writeln!(out, "[[workloads]]");
        let _ = writeln!(out, "name = \"w{w}\"");
        match rng.gen_range(0..3u8) {
            0 => {
                let rate = rng.gen_range(5..=100) as f64 / 10.0;
                let _ = writeln!(out, "kind = \"constant\"");
                let _ = writeln!(out, "rate = {rate:?}");
                let _ = writeln!(out, "demand = {demand:?}");
            }
            1 => {
                let base = rng.gen_range(5..=60) as f64 / 10.0;
                let step = if rng.gen_bool(0.2) {
                    0.0
                } else {
                    rng.gen_range(5..=120) as f64 / 10.0
                };
                let at = horizon * rng.gen_range(20..=70) as f64 / 100.0;
                let _ = writeln!(out, "kind = \"step\"");
                let _ = writeln!(out, "base_rate = {base:?}");
                let _ = writeln!(out, "step_rate = {step:?}");
                let _ = writeln!(out, "at_s = {at:?}");
                let _ = writeln!(out, "demand = {demand:?}");
            }
            _ => {
                let mean = rng.gen_range(20..=80) as f64 / 10.0;
                let amplitude = mean * rng.gen_range(20..=90) as f64 / 100.0;
                let period = rng.gen_range(200..=600) as f64;
                let resolution = rng.gen_range(100..=200) as f64;
                let _ = writeln!(out, "kind = \"diurnal\"");
                let _ = writeln!(out, "mean_rate = {mean:?}");
                let _ = writeln!(out, "amplitude = {amplitude:?}");
                let _ = writeln!(out, "period_s = {period:?}");
                let _ = writeln!(out, "resolution_s = {resolution:?}");
                let _ = writeln!(out, "demand = {demand:?}");
            }
        }
        let _ = writeln!(out);
    }

    for r in 0..n_requests {
        let arrival = horizon * rng.gen_range(0..=50) as f64 / 100.0;
        let rtime = rng.gen_range(3..=40) as f64 / 10.0;
        let thput = rng.gen_range(55..=100) as f64 / 100.0;
        let lease = if rng.gen_bool(0.3) {
            horizon * rng.gen_range(20..=60) as f64 / 100.0
        } else {
            horizon * 1.5
        };
        let workload = rng.gen_range(0..n_workloads);
        let _ = writeln!(out, "[[requests]]");
        let _ = writeln!(out, "id = \"q{r:02}\"");
        let _ = writeln!(out, "arrival_s = {arrival:?}");
        let _ = writeln!(out, "rtime_target_s = {rtime:?}");
        let _ = writeln!(out, "thput_target = {thput:?}");
        let _ = writeln!(out, "lease_s = {lease:?}");
        let _ = writeln!(out, "workload = \"w{workload}\"");
        let _ = writeln!(out);
    }

    if rng.gen_bool(0.5) {
        let n_faults: usize = rng.gen_range(1..=2);
        for f in 0..n_faults {
            if rng.gen_bool(0.5) {
                let node = rng.gen_range(0..n_nodes);
                let at = horizon * rng.gen_range(20..=80) as f64 / 100.0;
                let _ = writeln!(out, "[[faults]]");
                let _ = writeln!(out, "kind = \"node_fail\"");
                let _ = writeln!(out, "at_s = {at:?}");
                let _ = writeln!(out, "node = {node}");
            } else {
                let id = 50 + f as u64;
                let at = horizon * rng.gen_range(10..=50) as f64 / 100.0;
                let cpu = cap_choices[rng.gen_range(0..cap_choices.len())];
                let mem = cap_choices[rng.gen_range(0..cap_choices.len())];
                let anchor = rng.gen_range(0..n_nodes);
                let _ = writeln!(out, "[[faults]]");
                let _ = writeln!(out, "kind = \"node_join\"");
                let _ = writeln!(out, "at_s = {at:?}");
                let _ = writeln!(out, "id = {id}");
                let _ = writeln!(out, "cpu_capacity = {cpu:?}");
                let _ = writeln!(out, "mem_capacity = {mem:?}");
                let _ = writeln!(out, "neighbors = [{anchor}]");
                emit_power(&mut out, &mut rng);
                let _ = writeln!(out);
            }
            let _ = writeln!(out);
        }
    }

    out
}

/// Parse a generated scenario, panicking with the full text on failure so a
/// generator bug is immediately visible.
pub fn generated_scenario(seed: u64) -> Scenario {
    let text = random_scenario_toml(seed);
    match parse_scenario(&text, None) {
        Ok(s) => s,
        Err(e) => panic!("generated scenario {seed} failed to parse: {e}\n---\n{text}"),
    }
}

/// Run a scenario with invocation recording and per-event invariant checks
/// switched on.
pub fn run_recorded(mut scenario: Scenario) -> RunOutput {
    scenario.params.record = true;
    scenario.params.check_invariants = true;
    Engine::new(scenario.world, scenario.params).run()
}

/// Parse scenario text or panic with the parser error.
pub fn scenario_from(text: &str) -> Scenario {
    parse_scenario(text, None).expect("scenario text parses")
}
