//! Agent behaviors. Four roles cooperate through the shared resource table:
//! workers admit requests at the controller, testers watch utilization and
//! react to monitor verdicts, scouts register newly joined machines, and
//! cleaners retire clones, leases, and dead nodes.
//!
//! Every behavior mutates the [`World`] directly and returns the list of
//! [`Action`]s it performed, in the order it performed them. The engine logs
//! these and, when recording, pairs them with a pre-invocation snapshot so
//! reference interpreters can replay the decision from the same inputs.

use std::collections::BTreeSet;

use rand::rngs::StdRng;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{NodeId, NodeState, RequestId, SlamCode, VmId, VmInstance};
use crate::power::instantaneous_power;
use crate::world::{Action, AdminReason, MigrateReason, StateReason, World};

/// Roaming agent roles. Workers are not listed: admission runs at the
/// controller and has no position in the topology.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AntKind {
    Tester,
    Cleaner,
    Scout,
}

/// A roaming agent: where it is and where it has been since its last reset.
#[derive(Debug, Clone)]
pub struct AntAgent {
    pub id: u64,
    pub kind: AntKind,
    pub current: NodeId,
    pub visited: BTreeSet<NodeId>,
    pub spawned_at: f64,
}

impl AntAgent {
    pub fn new(id: u64, kind: AntKind, start: NodeId, now: f64) -> Self {
        let mut visited = BTreeSet::new();
        visited.insert(start);
        AntAgent {
            id,
            kind,
            current: start,
            visited,
            spawned_at: now,
        }
    }
}

/// Pick the ant's next stop: a uniformly random unvisited neighbor when one
/// exists, otherwise a uniformly random unvisited node anywhere (the ant
/// gives up on adjacency rather than stall), otherwise stay put.
pub fn next_hop(world: &World, ant: &AntAgent, rng: &mut StdRng) -> NodeId {
    let walkable: BTreeSet<NodeId> = world.table.entries().iter().map(|e| e.node).collect();
    let neighbors: Vec<NodeId> = match world.nodes.get(&ant.current) {
        Some(node) => node
            .neighbors
            .iter()
            .filter(|n| walkable.contains(n) && !ant.visited.contains(n))
            .copied()
            .collect(),
        None => Vec::new(),
    };
    if !neighbors.is_empty() {
        return neighbors[rng.gen_range(0..neighbors.len())];
    }
    let elsewhere: Vec<NodeId> = walkable
        .iter()
        .filter(|n| !ant.visited.contains(n) && **n != ant.current)
        .copied()
        .collect();
    if !elsewhere.is_empty() {
        return elsewhere[rng.gen_range(0..elsewhere.len())];
    }
    ant.current
}

/// Land the ant on `node` and keep its visited list consistent: the list
/// resets exactly when it covers every node currently in the table.
pub fn arrive(world: &World, ant: &mut AntAgent, node: NodeId) {
    ant.current = node;
    ant.visited.insert(node);
    let walkable: BTreeSet<NodeId> = world.table.entries().iter().map(|e| e.node).collect();
    if !walkable.is_empty() && walkable.iter().all(|n| ant.visited.contains(n)) {
        ant.visited.clear();
        ant.visited.insert(node);
    }
}

pub(crate) fn fits(world: &World, node: NodeId, need: (f64, f64)) -> bool {
    let n = &world.nodes[&node];
    n.remaining_cpu >= need.0 && n.remaining_mem >= need.1
}

pub(crate) fn deploy(world: &mut World, request: &RequestId, node: NodeId, acts: &mut Vec<Action>) {
    let vm_id = VmId(world.next_vm_id);
    world.next_vm_id += 1;
    let req = &world.requests[request];
    let vm = VmInstance {
        id: vm_id,
        request: request.clone(),
        host: node,
        cpu_entitlement: world.tunables.basic_vm_cpu,
        mem_entitlement: world.tunables.basic_vm_mem,
        is_clone: false,
        parent_vm: None,
        traffic_share: 1.0,
        lease_expiry: world.now + req.lease_duration,
        slam: SlamCode::Ok,
        last_obs: None,
        migrating_until: None,
    };
    world.place_vm(vm);
    acts.push(Action::Deploy {
        request: request.clone(),
        vm: vm_id,
        node,
    });
}

fn notify_admin(world: &mut World, reason: AdminReason, acts: &mut Vec<Action>) {
    world.controller.admin_notices.push((world.now, reason));
    acts.push(Action::NotifyAdmin { reason });
}

/// Admit one request from the queue head: try the pointer node, advance at
/// most once on a miss (waking whatever the pointer lands on), and reject
/// when the retry misses too. An invalid pointer is resource scarcity.
pub fn worker_allocate(world: &mut World, request: &RequestId) -> Vec<Action> {
    let mut acts = Vec::new();
    let need = (world.tunables.basic_vm_cpu, world.tunables.basic_vm_mem);
    let Some(first) = world.table.pointer_node() else {
        notify_admin(world, AdminReason::ResourceScarcity, &mut acts);
        acts.push(Action::Reject {
            request: request.clone(),
        });
        return acts;
    };
    if fits(world, first, need) {
        deploy(world, request, first, &mut acts);
        return acts;
    }
    let target = world.table.advance();
    acts.push(Action::AdvancePointer { to: target });
    let Some(next) = target else {
        notify_admin(world, AdminReason::ResourceScarcity, &mut acts);
        acts.push(Action::Reject {
            request: request.clone(),
        });
        return acts;
    };
    if world.nodes[&next].state != NodeState::Active {
        let act = world.set_state(next, NodeState::Active, StateReason::AllocationWake);
        acts.push(act);
    }
    if fits(world, next, need) {
        deploy(world, request, next, &mut acts);
    } else {
        acts.push(Action::Reject {
            request: request.clone(),
        });
    }
    acts
}

/// Keep the entries just past the pointer ready: boot powered-off pool
/// entries into standby, power off idle standby entries past the pool, and
/// flag a shortfall (once per pointer position) when the table is too short
/// to fill the pool.
pub fn maintain_warm_pool(world: &mut World) -> Vec<Action> {
    let mut acts = Vec::new();
    let Some(p) = world.table.pointer() else {
        return acts;
    };
    let pool = world.pool_positions();
    for idx in &pool {
        let node = world.table.node_at(*idx).expect("pool position in range");
        if world.nodes[&node].state == NodeState::Off {
            let act = world.set_state(node, NodeState::Standby, StateReason::PoolFill);
            acts.push(act);
        }
    }
    let beyond = p + 1 + world.tunables.warm_pool_size;
    for idx in beyond..world.table.len() {
        let node = world.table.node_at(idx).expect("index in range");
        let n = &world.nodes[&node];
        if n.state == NodeState::Standby && n.hosted.is_empty() {
            let act = world.set_state(node, NodeState::Off, StateReason::PoolRelease);
            acts.push(act);
        }
    }
    if pool.len() < world.tunables.warm_pool_size && !world.controller.pool_noted.contains(&p) {
        world.controller.pool_noted.insert(p);
        notify_admin(world, AdminReason::FewResources, &mut acts);
    }
    acts
}

/// Inspect one node: refresh every hosted VM's observation and verdict and
/// the node's table power figure, then either relieve an overloaded node
/// (critical verdicts first, heaviest VMs first) or drain an underloaded one
/// onto more efficient nodes and put it to sleep.
pub fn tester_visit(world: &mut World, node_id: NodeId) -> Vec<Action> {
    let mut acts = Vec::new();
    let Some(node) = world.nodes.get_mut(&node_id) else {
        return acts;
    };
    if !node.registered || !node.responsive {
        return acts;
    }
    node.last_seen = world.now;
    if node.state != NodeState::Active {
        let draw = instantaneous_power(&world.nodes[&node_id], 0.0, 0.0)
            .expect("zero utilization is in range");
        world.table.set_power(node_id, draw);
        return acts;
    }
    let hosted: Vec<VmId> = world.nodes[&node_id].hosted.clone();
    for vm in &hosted {
        world.refresh_vm(*vm);
    }
    let (u_cpu, u_mem) = world.node_utilization(node_id);
    let draw = instantaneous_power(&world.nodes[&node_id], u_cpu, u_mem)
        .expect("fit checks keep utilization in range");
    world.table.set_power(node_id, draw);

    let t = world.tunables;
    if u_cpu > t.overload_util || u_mem > t.overload_util {
        let mut ranked: Vec<(f64, VmId)> = hosted
            .iter()
            .map(|v| (world.vm_load_scalar(&world.vms[v]), *v))
            .collect();
        ranked.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .expect("loads are finite")
                .then(a.1.cmp(&b.1))
        });
        for (_, vm) in &ranked {
            if world.vms[vm].slam.is_critical() {
                handle_critical(world, *vm, &mut acts);
            }
        }
        for (_, vm) in &ranked {
            if world.vms[vm].slam.is_recommended() {
                handle_recommended(world, *vm, &mut acts);
            }
        }
    } else if u_cpu < t.consolidate_util
        && u_mem < t.consolidate_util
        && world.table.pointer_node() != Some(node_id)
    {
        consolidate(world, node_id, &mut acts);
    }
    acts
}

/// Try to move everything off `node_id` to nodes ranked above it, then put
/// it to sleep and power off the rear-most standby node. All-or-nothing: if
/// any VM finds no room above, nothing moves.
fn consolidate(world: &mut World, node_id: NodeId, acts: &mut Vec<Action>) {
    let my_idx = world
        .table
        .position(node_id)
        .expect("visited node is in the table");
    let mut targets: Vec<(NodeId, f64, f64)> = world
        .table
        .entries()
        .iter()
        .take(my_idx)
        .filter(|e| world.nodes[&e.node].usable())
        .map(|e| {
            let n = &world.nodes[&e.node];
            (e.node, n.remaining_cpu, n.remaining_mem)
        })
        .collect();
    targets.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .expect("capacities are finite")
            .then(b.2.partial_cmp(&a.2).expect("capacities are finite"))
            .then(a.0.cmp(&b.0))
    });
    let hosted: Vec<VmId> = world.nodes[&node_id].hosted.clone();
    let mut plan: Vec<(VmId, NodeId)> = Vec::new();
    for vm_id in &hosted {
        let vm = &world.vms[vm_id];
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
        let from = world.vms[&vm_id].host;
        world.migrate_vm(vm_id, target);
        acts.push(Action::Migrate {
            vm: vm_id,
            from,
            to: target,
            reason: MigrateReason::Consolidation,
        });
    }
    let act = world.set_state(node_id, NodeState::Standby, StateReason::ConsolidateSleep);
    acts.push(act);
    let last_standby = world
        .table
        .entries()
        .iter()
        .rev()
        .map(|e| e.node)
        .find(|n| {
            let node = &world.nodes[n];
            node.state == NodeState::Standby && node.responsive
        });
    if let Some(last) = last_standby {
        let act = world.set_state(last, NodeState::Off, StateReason::TailOff);
        acts.push(act);
    }
}

/// Relief sizing: the componentwise slice of measured use a clone is
/// entitled to, floored so a born-idle VM still gets a real footprint.
fn clone_need(world: &World, used: (f64, f64)) -> (f64, f64) {
    let t = world.tunables;
    (
        (t.clone_fraction * used.0).max(t.clone_floor),
        (t.clone_fraction * used.1).max(t.clone_floor),
    )
}

/// Migration sizing: headroom over measured use, never below the
/// entitlement actually being moved.
fn migrate_need(world: &World, vm: &VmInstance, used: (f64, f64)) -> (f64, f64) {
    let t = world.tunables;
    (
        (t.migrate_headroom * used.0).max(vm.cpu_entitlement),
        (t.migrate_headroom * used.1).max(vm.mem_entitlement),
    )
}

/// First table entry (efficiency order) that is not `exclude`, answers, is
/// active or standby, and has the asked-for free capacity.
fn find_relief(world: &World, exclude: NodeId, need: (f64, f64)) -> Option<usize> {
    world.table.entries().iter().position(|e| {
        if e.node == exclude {
            return false;
        }
        let n = &world.nodes[&e.node];
        n.responsive
            && matches!(n.state, NodeState::Active | NodeState::Standby)
            && n.remaining_cpu >= need.0
            && n.remaining_mem >= need.1
    })
}

fn spawn_clone(
    world: &mut World,
    parent_id: VmId,
    node: NodeId,
    need: (f64, f64),
    acts: &mut Vec<Action>,
) {
    let clone_id = VmId(world.next_vm_id);
    world.next_vm_id += 1;
    let parent = world.vms[&parent_id].clone();
    acts.push(Action::CloneVm {
        parent: parent_id,
        clone: clone_id,
        node,
        cpu: need.0,
        mem: need.1,
    });
    if world.nodes[&node].state == NodeState::Standby {
        let act = world.set_state(node, NodeState::Active, StateReason::CriticalWake);
        acts.push(act);
    }
    world.place_vm(VmInstance {
        id: clone_id,
        request: parent.request.clone(),
        host: node,
        cpu_entitlement: need.0,
        mem_entitlement: need.1,
        is_clone: true,
        parent_vm: Some(parent_id),
        traffic_share: 0.0,
        lease_expiry: parent.lease_expiry,
        slam: SlamCode::Ok,
        last_obs: None,
        migrating_until: None,
    });
    world.rebalance_shares(&parent.request);
}

/// React to a critical verdict on one VM. A critical-clone verdict spins up
/// a half-sized clone on the best node with room (waking it from standby if
/// needed) and boots the next powered-off node into standby to replace the
/// spent reserve. A critical-migrate verdict moves the VM to the best node
/// with headroom, falling back to a clone, falling back to an admin notice.
pub fn handle_critical(world: &mut World, vm_id: VmId, acts: &mut Vec<Action>) {
    let vm = world.vms[&vm_id].clone();
    debug_assert!(vm.slam.is_critical());
    let used = world.vm_used(&vm);
    match vm.slam {
        SlamCode::CriticalClone => {
            let need = clone_need(world, used);
            let Some(idx) = find_relief(world, vm.host, need) else {
                notify_admin(world, AdminReason::ResourceScarcity, acts);
                return;
            };
            let target = world.table.node_at(idx).expect("position came from the table");
            spawn_clone(world, vm_id, target, need, acts);
            let next_off = world
                .table
                .entries()
                .iter()
                .skip(idx + 1)
                .map(|e| e.node)
                .find(|n| {
                    let node = &world.nodes[n];
                    node.state == NodeState::Off && node.responsive
                });
            match next_off {
                Some(off_node) => {
                    let act =
                        world.set_state(off_node, NodeState::Standby, StateReason::PoolReplenish);
                    acts.push(act);
                }
                None => notify_admin(world, AdminReason::FewResources, acts),
            }
        }
        SlamCode::CriticalMigrate => {
            let need = migrate_need(world, &vm, used);
            if let Some(idx) = find_relief(world, vm.host, need) {
                let target = world.table.node_at(idx).expect("position came from the table");
                if world.nodes[&target].state == NodeState::Standby {
                    let act = world.set_state(target, NodeState::Active, StateReason::CriticalWake);
                    acts.push(act);
                }
                world.migrate_vm(vm_id, target);
                acts.push(Action::Migrate {
                    vm: vm_id,
                    from: vm.host,
                    to: target,
                    reason: MigrateReason::Critical,
                });
                return;
            }
            let need = clone_need(world, used);
            if let Some(idx) = find_relief(world, vm.host, need) {
                let target = world.table.node_at(idx).expect("position came from the table");
                spawn_clone(world, vm_id, target, need, acts);
            } else {
                notify_admin(world, AdminReason::ResourceScarcity, acts);
            }
        }
        _ => {}
    }
}

/// React to a warning verdict: like the critical paths but gentler. Only
/// nodes ranked above the VM's host are considered, nothing is ever woken,
/// and finding no room is silently acceptable.
pub fn handle_recommended(world: &mut World, vm_id: VmId, acts: &mut Vec<Action>) {
    let vm = world.vms[&vm_id].clone();
    debug_assert!(vm.slam.is_recommended());
    let host_idx = world
        .table
        .position(vm.host)
        .expect("hosting node is in the table");
    let used = world.vm_used(&vm);
    let find_above = |world: &World, need: (f64, f64)| -> Option<NodeId> {
        world
            .table
            .entries()
            .iter()
            .take(host_idx)
            .map(|e| e.node)
            .find(|n| {
                let node = &world.nodes[n];
                node.usable() && node.remaining_cpu >= need.0 && node.remaining_mem >= need.1
            })
    };
    match vm.slam {
        SlamCode::RecommendMigrate => {
            let need = migrate_need(world, &vm, used);
            if let Some(target) = find_above(world, need) {
                world.migrate_vm(vm_id, target);
                acts.push(Action::Migrate {
                    vm: vm_id,
                    from: vm.host,
                    to: target,
                    reason: MigrateReason::Recommended,
                });
            }
        }
        SlamCode::RecommendClone => {
            let need = clone_need(world, used);
            if let Some(target) = find_above(world, need) {
                spawn_clone(world, vm_id, target, need, acts);
            }
        }
        _ => {}
    }
}

/// Register any unregistered machines adjacent to the visited node: compute
/// their efficiency figures, splice them into the table (the pointer keeps
/// indexing the node it indexed before), and hold them in standby.
pub fn scout_visit(world: &mut World, node_id: NodeId) -> Vec<Action> {
    let mut acts = Vec::new();
    let Some(node) = world.nodes.get_mut(&node_id) else {
        return acts;
    };
    if !node.registered || !node.responsive {
        return acts;
    }
    node.last_seen = world.now;
    let discovered: Vec<NodeId> = world.nodes[&node_id]
        .neighbors
        .iter()
        .filter(|n| {
            world
                .nodes
                .get(n)
                .map(|m| !m.registered && m.responsive && m.state != NodeState::Failed)
                .unwrap_or(false)
        })
        .copied()
        .collect();
    let weights = world.tunables.sort_weights;
    for id in discovered {
        {
            let m = world.nodes.get_mut(&id).expect("discovered node exists");
            m.registered = true;
            m.state = NodeState::Standby;
            m.last_seen = world.now;
        }
        world
            .table
            .register(&world.nodes, weights, id)
            .expect("validated profiles always rank");
        acts.push(Action::RegisterNode { node: id });
    }
    acts
}

/// Housekeeping visit: notice dead machines anywhere (removing their VMs,
/// requeueing orphaned requests, and repairing the table pointer), then walk
/// the visited node's VMs to retire idle clones, surplus clones, and
/// expiring leases.
pub fn cleaner_visit(world: &mut World, node_id: NodeId) -> Vec<Action> {
    let mut acts = Vec::new();
    detect_failures(world, &mut acts);

    let Some(node) = world.nodes.get(&node_id) else {
        return acts;
    };
    if !node.registered || !node.responsive || node.state != NodeState::Active {
        return acts;
    }
    let t = world.tunables;

    // Pass 1: clones that consume nothing while their parent has headroom.
    for vm_id in world.nodes[&node_id].hosted.clone() {
        let vm = &world.vms[&vm_id];
        if !vm.is_clone {
            continue;
        }
        let (used_cpu, _) = world.vm_used(vm);
        if used_cpu < t.nil_epsilon && parent_peak(world, vm) < t.overload_util {
            let removed = world.remove_vm_record(vm_id);
            acts.push(Action::RemoveClone {
                clone: vm_id,
                node: node_id,
            });
            world.return_share(&removed.request, removed.traffic_share, removed.parent_vm);
        }
    }

    // Pass 2: clones comfortably beating their targets while the parent has
    // headroom; the extra instance no longer pays for itself.
    for vm_id in world.nodes[&node_id].hosted.clone() {
        let Some(vm) = world.vms.get(&vm_id) else {
            continue;
        };
        if !vm.is_clone {
            continue;
        }
        let Some(obs) = vm.last_obs else {
            continue;
        };
        let req = &world.requests[&vm.request];
        if obs.rtime_s <= t.perf_excess_rtime * req.rtime_target
            && obs.thput >= t.perf_excess_thput * req.thput_target
            && parent_peak(world, vm) < t.overload_util
        {
            let removed = world.remove_vm_record(vm_id);
            acts.push(Action::RemoveClone {
                clone: vm_id,
                node: node_id,
            });
            world.return_share(&removed.request, removed.traffic_share, removed.parent_vm);
        }
    }

    // Pass 3: warn each request once when its lease enters the window.
    for vm_id in world.nodes[&node_id].hosted.clone() {
        let Some(vm) = world.vms.get(&vm_id) else {
            continue;
        };
        let remaining = vm.lease_expiry - world.now;
        if remaining > 0.0
            && remaining <= t.lease_warning_window
            && !world.controller.warned.contains(&vm.request)
        {
            let request = vm.request.clone();
            world.controller.warned.insert(request.clone());
            world.controller.user_notices.push((world.now, request.clone()));
            acts.push(Action::NotifyUser { request });
        }
    }

    // Pass 4: remove VMs whose lease has run out.
    for vm_id in world.nodes[&node_id].hosted.clone() {
        let Some(vm) = world.vms.get(&vm_id) else {
            continue;
        };
        if vm.lease_expiry <= world.now {
            let removed = world.remove_vm_record(vm_id);
            if removed.is_clone {
                acts.push(Action::RemoveClone {
                    clone: vm_id,
                    node: node_id,
                });
            } else {
                acts.push(Action::RemoveVm {
                    vm: vm_id,
                    node: node_id,
                });
            }
            world.return_share(&removed.request, removed.traffic_share, None);
        }
    }
    acts
}

/// Peak utilization fraction of a clone's parent host, zero when the parent
/// is already gone.
fn parent_peak(world: &World, vm: &VmInstance) -> f64 {
    vm.parent_vm
        .and_then(|p| world.vms.get(&p))
        .map(|parent| {
            let (u_cpu, u_mem) = world.node_utilization(parent.host);
            u_cpu.max(u_mem)
        })
        .unwrap_or(0.0)
}

/// Fleet-wide failure sweep: refresh the books of every answering node and
/// declare the silent ones dead once their silence exceeds the timeout.
fn detect_failures(world: &mut World, acts: &mut Vec<Action>) {
    let ids: Vec<NodeId> = world
        .nodes
        .values()
        .filter(|n| n.registered)
        .map(|n| n.id)
        .collect();
    let timeout = world.tunables.failure_timeout;
    let weights = world.tunables.sort_weights;
    for id in ids {
        let node = &world.nodes[&id];
        if node.responsive {
            world.nodes.get_mut(&id).expect("listed node exists").last_seen = world.now;
            continue;
        }
        if world.now - node.last_seen < timeout {
            continue;
        }
        acts.push(world.mark_failed(id));
        // Handling a primary below also removes its clones, which may sit
        // later in this same list; skip entries that are already gone.
        for vm_id in world.nodes[&id].hosted.clone() {
            let Some(vm) = world.vms.get(&vm_id) else {
                continue;
            };
            let vm = vm.clone();
            if vm.is_clone {
                let removed = world.remove_vm_record(vm_id);
                acts.push(Action::RemoveClone {
                    clone: vm_id,
                    node: id,
                });
                world.return_share(&removed.request, removed.traffic_share, removed.parent_vm);
            } else {
                let clone_ids: Vec<VmId> = world
                    .vms
                    .values()
                    .filter(|v| v.parent_vm == Some(vm_id))
                    .map(|v| v.id)
                    .collect();
                for cid in clone_ids {
                    let c = world.remove_vm_record(cid);
                    acts.push(Action::RemoveClone {
                        clone: cid,
                        node: c.host,
                    });
                }
                let removed = world.remove_vm_record(vm_id);
                acts.push(Action::RemoveVm { vm: vm_id, node: id });
                // The admitted service must come back: head of the queue.
                if !world.controller.queue.contains(&removed.request) {
                    world.controller.queue.push_front(removed.request);
                }
            }
        }
        world
            .table
            .remove(&world.nodes, weights, id)
            .expect("failed node was in the table");
        if let Some(pn) = world.table.pointer_node() {
            if world.nodes[&pn].state != NodeState::Active {
                let act = world.set_state(pn, NodeState::Active, StateReason::AllocationWake);
                acts.push(act);
            }
        }
    }
}
