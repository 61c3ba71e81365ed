//! Deterministic discrete-event engine. Events are ordered by (time,
//! insertion sequence); all randomness flows through one seeded generator
//! consumed in dispatch order, so a (scenario, seed) pair fixes the run.
//!
//! Between events utilization is constant, which lets energy, violation
//! time, and the report series integrate exactly.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ants::{self, AntAgent, AntKind};
use crate::domain::{NodeId, NodeRecord, NodeState, PowerProfile, RequestId, VmId};
use crate::metrics::{self, MetricsReport};
use crate::power::{instantaneous_power, EnergyMeter};
use crate::world::{Action, Actor, LoggedAction, World, WorldSnapshot};

#[derive(Debug, Error, PartialEq)]
pub enum EngineError {
    #[error("unknown node {0}")]
    UnknownNode(NodeId),
    #[error("node {0} already exists")]
    DuplicateNode(NodeId),
    #[error("fault time {0} must be finite and non-negative")]
    InvalidTime(f64),
}

/// Allocation policy driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Policy {
    /// The agent colony: pointer allocation, warm pool, testers, cleaners,
    /// scouts.
    Ant,
    /// Every node stays active; placements rotate over the fleet.
    RoundRobin,
    /// Every node stays active; placements take the lowest-id node that fits.
    FirstFit,
}

impl Policy {
    pub fn as_str(self) -> &'static str {
        match self {
            Policy::Ant => "ant",
            Policy::RoundRobin => "round_robin",
            Policy::FirstFit => "first_fit",
        }
    }
}

/// A machine joining the fleet at runtime. It stays invisible (and unbilled)
/// until a scout registers it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinSpec {
    pub id: NodeId,
    pub cpu_capacity: f64,
    pub mem_capacity: f64,
    pub power: PowerProfile,
    pub neighbors: Vec<NodeId>,
}

/// Everything that can be pulled off the event queue.
#[derive(Debug, Clone, PartialEq)]
pub enum SimEvent {
    RequestArrival(RequestId),
    AntSpawn(AntKind),
    AntHop(u64),
    SampleMetrics,
    NodeJoin(Box<JoinSpec>),
    NodeFail(NodeId),
    LeaseExpiry(VmId),
    TransitionComplete { node: NodeId, epoch: u64 },
    /// Offered load changed (trace breakpoint or migration completing);
    /// forces an accounting boundary.
    DemandChange,
}

#[derive(Debug, Clone)]
struct QueuedEvent {
    t: f64,
    seq: u64,
    ev: SimEvent,
}

impl PartialEq for QueuedEvent {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for QueuedEvent {}

impl PartialOrd for QueuedEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for QueuedEvent {
    // Reversed so the max-heap pops the earliest (t, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Spawn schedule for one ant kind.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AntSchedule {
    pub population: usize,
    pub hop_interval_s: f64,
    pub spawn_period_s: f64,
}

impl Default for AntSchedule {
    fn default() -> Self {
        AntSchedule {
            population: 1,
            hop_interval_s: 15.0,
            spawn_period_s: 60.0,
        }
    }
}

/// A scripted fault, scheduled before the run starts.
#[derive(Debug, Clone, PartialEq)]
pub enum FaultSpec {
    /// The node stops answering agents at `at_s`; nobody is told.
    Fail { at_s: f64, node: NodeId },
    /// A new machine appears at `at_s`, waiting to be discovered.
    Join { at_s: f64, spec: JoinSpec },
}

/// Run-level parameters the engine needs beyond the world itself.
#[derive(Debug, Clone)]
pub struct EngineParams {
    pub scenario_name: String,
    pub seed: u64,
    pub policy: Policy,
    pub horizon_s: f64,
    pub sample_interval_s: f64,
    pub config_sha256: String,
    pub ants: BTreeMap<AntKind, AntSchedule>,
    pub faults: Vec<FaultSpec>,
    /// Capture a snapshot + action list for every colony invocation.
    pub record: bool,
    /// Assert world invariants after every event (testing aid).
    pub check_invariants: bool,
}

/// Which colony behavior an invocation record replays.
#[derive(Debug, Clone, PartialEq)]
pub enum ColonyOp {
    Worker { request: RequestId },
    PoolMaintain,
    TesterVisit { node: NodeId },
    CleanerVisit { node: NodeId },
    ScoutVisit { node: NodeId },
}

/// One colony invocation: the state it saw and the actions it took.
#[derive(Debug, Clone)]
pub struct InvocationRecord {
    pub op: ColonyOp,
    pub before: WorldSnapshot,
    pub actions: Vec<Action>,
}

/// Result of a completed run.
#[derive(Debug)]
pub struct RunOutput {
    pub report: MetricsReport,
    pub records: Vec<InvocationRecord>,
}

pub struct Engine {
    pub world: World,
    params: EngineParams,
    events: BinaryHeap<QueuedEvent>,
    next_event_seq: u64,
    rng: StdRng,
    ants: BTreeMap<u64, AntAgent>,
    next_ant_id: u64,
    rr_cursor: usize,
    meter: EnergyMeter,
    violation_vm_seconds: f64,
    observations: u64,
    slam_histogram: BTreeMap<u8, u64>,
    active_series: Vec<(f64, u64)>,
    power_series: Vec<(f64, f64)>,
    log: Vec<LoggedAction>,
    next_log_seq: u64,
    records: Vec<InvocationRecord>,
    finished: bool,
}

impl Engine {
    pub fn new(mut world: World, params: EngineParams) -> Self {
        apply_initial_states(&mut world, params.policy);
        let mut engine = Engine {
            rng: StdRng::seed_from_u64(params.seed),
            world,
            events: BinaryHeap::new(),
            next_event_seq: 0,
            ants: BTreeMap::new(),
            next_ant_id: 0,
            rr_cursor: 0,
            meter: EnergyMeter::new(),
            violation_vm_seconds: 0.0,
            observations: 0,
            slam_histogram: BTreeMap::new(),
            active_series: Vec::new(),
            power_series: Vec::new(),
            log: Vec::new(),
            next_log_seq: 0,
            records: Vec::new(),
            finished: false,
            params,
        };
        engine.schedule_initial_events();
        engine
    }

    fn push_event(&mut self, t: f64, ev: SimEvent) {
        if t > self.params.horizon_s {
            return;
        }
        let seq = self.next_event_seq;
        self.next_event_seq += 1;
        self.events.push(QueuedEvent { t, seq, ev });
    }

    fn schedule_initial_events(&mut self) {
        self.push_event(0.0, SimEvent::SampleMetrics);
        if self.params.policy == Policy::Ant {
            let kinds: Vec<AntKind> = self.params.ants.keys().copied().collect();
            for kind in kinds {
                self.push_event(0.0, SimEvent::AntSpawn(kind));
            }
        }
        let boundaries: Vec<f64> = self
            .world
            .workloads
            .values()
            .flat_map(|w| w.change_times().collect::<Vec<_>>())
            .collect();
        for t in boundaries {
            self.push_event(t, SimEvent::DemandChange);
        }
        let arrivals: Vec<(f64, RequestId)> = self
            .world
            .requests
            .values()
            .map(|r| (r.arrival_time, r.id.clone()))
            .collect();
        for (t, id) in arrivals {
            self.push_event(t, SimEvent::RequestArrival(id));
        }
        let faults = self.params.faults.clone();
        for fault in faults {
            match fault {
                FaultSpec::Fail { at_s, node } => self.push_event(at_s, SimEvent::NodeFail(node)),
                FaultSpec::Join { at_s, spec } => {
                    self.push_event(at_s, SimEvent::NodeJoin(Box::new(spec)))
                }
            }
        }
    }

    /// Script a fault before (or during) a run. Join faults may reference
    /// nodes that do not exist yet; fail faults must name a known node.
    pub fn inject_fault(&mut self, fault: FaultSpec) -> Result<(), EngineError> {
        match &fault {
            FaultSpec::Fail { at_s, node } => {
                if !at_s.is_finite() || *at_s < 0.0 {
                    return Err(EngineError::InvalidTime(*at_s));
                }
                if !self.world.nodes.contains_key(node) {
                    return Err(EngineError::UnknownNode(*node));
                }
                self.push_event(*at_s, SimEvent::NodeFail(*node));
            }
            FaultSpec::Join { at_s, spec } => {
                if !at_s.is_finite() || *at_s < 0.0 {
                    return Err(EngineError::InvalidTime(*at_s));
                }
                if self.world.nodes.contains_key(&spec.id) {
                    return Err(EngineError::DuplicateNode(spec.id));
                }
                self.push_event(*at_s, SimEvent::NodeJoin(Box::new(spec.clone())));
            }
        }
        Ok(())
    }

    /// Advance through the next event. Returns its time, or `None` once the
    /// horizon is reached (after billing the tail interval exactly once).
    pub fn step(&mut self) -> Option<f64> {
        if self.finished {
            return None;
        }
        let Some(qe) = self.events.pop() else {
            self.finish();
            return None;
        };
        if qe.t > self.params.horizon_s {
            self.finish();
            return None;
        }
        if qe.t > self.world.now {
            self.bill(qe.t);
            self.world.now = qe.t;
        }
        self.dispatch(qe.ev);
        if self.params.check_invariants {
            if let Err(msg) = check_world(&self.world) {
                panic!("invariant violated at t={}: {msg}", self.world.now);
            }
        }
        Some(qe.t)
    }

    fn finish(&mut self) {
        if !self.finished {
            let horizon = self.params.horizon_s;
            if horizon > self.world.now {
                self.bill(horizon);
                self.world.now = horizon;
            }
            self.finished = true;
        }
    }

    /// Run to the horizon and assemble the report.
    pub fn run(mut self) -> RunOutput {
        while self.step().is_some() {}
        self.finish();
        let report = self.build_report();
        RunOutput {
            report,
            records: self.records,
        }
    }

    /// Physical draw of one node right now: dead machines draw nothing no
    /// matter what the controller's books claim.
    fn node_power(&self, node: &NodeRecord) -> f64 {
        if !node.responsive || !node.registered {
            return 0.0;
        }
        let (u_cpu, u_mem) = if node.hosted.is_empty() {
            (0.0, 0.0)
        } else {
            self.world.node_utilization(node.id)
        };
        instantaneous_power(node, u_cpu, u_mem).expect("capacity charging keeps utilization in range")
    }

    /// Integrate energy and violation time over [now, to], during which the
    /// world is constant.
    fn bill(&mut self, to: f64) {
        let from = self.world.now;
        let dt = to - from;
        debug_assert!(dt >= 0.0);
        let powers: Vec<(NodeId, f64)> = self
            .world
            .nodes
            .values()
            .map(|n| (n.id, self.node_power(n)))
            .collect();
        for (id, w) in powers {
            self.meter
                .accumulate(id, w, from, to)
                .expect("billing intervals move forward");
        }
        for vm in self.world.vms.values() {
            if self.world.vm_current_slam(vm).is_critical() {
                self.violation_vm_seconds += dt;
            }
        }
    }

    fn log_actions(&mut self, actor: Actor, actions: &[Action]) {
        for action in actions {
            let seq = self.next_log_seq;
            self.next_log_seq += 1;
            self.log.push(LoggedAction {
                t: self.world.now,
                seq,
                actor,
                action: action.clone(),
            });
        }
    }

    /// Schedule the delayed consequences of the actions just taken: lease
    /// endpoints for new VMs, completion markers for latent power
    /// transitions, and accounting boundaries for latent migrations.
    fn schedule_followups(&mut self, actions: &[Action]) {
        let mut pushes: Vec<(f64, SimEvent)> = Vec::new();
        for action in actions {
            match action {
                Action::Deploy { vm, .. } | Action::CloneVm { clone: vm, .. } => {
                    if let Some(v) = self.world.vms.get(vm) {
                        pushes.push((v.lease_expiry, SimEvent::LeaseExpiry(*vm)));
                    }
                }
                Action::StateChange { node, .. } => {
                    if let Some(p) = self.world.nodes.get(node).and_then(|n| n.pending) {
                        pushes.push((
                            p.complete_at,
                            SimEvent::TransitionComplete {
                                node: *node,
                                epoch: p.epoch,
                            },
                        ));
                    }
                }
                Action::Migrate { vm, .. } => {
                    if let Some(until) = self.world.vms.get(vm).and_then(|v| v.migrating_until) {
                        pushes.push((until, SimEvent::DemandChange));
                    }
                }
                _ => {}
            }
        }
        for (t, ev) in pushes {
            self.push_event(t, ev);
        }
    }

    /// Run one colony behavior: snapshot (if recording), execute, log,
    /// record, and schedule follow-ups. Returns whether it acted at all.
    fn run_colony_op(&mut self, op: ColonyOp) -> bool {
        let before = self.params.record.then(|| self.world.snapshot());
        let (actor, actions) = match &op {
            ColonyOp::Worker { request } => (
                Actor::Controller,
                ants::worker_allocate(&mut self.world, request),
            ),
            ColonyOp::PoolMaintain => (
                Actor::Controller,
                ants::maintain_warm_pool(&mut self.world),
            ),
            ColonyOp::TesterVisit { node } => {
                (Actor::Tester, ants::tester_visit(&mut self.world, *node))
            }
            ColonyOp::CleanerVisit { node } => {
                (Actor::Cleaner, ants::cleaner_visit(&mut self.world, *node))
            }
            ColonyOp::ScoutVisit { node } => {
                (Actor::Scout, ants::scout_visit(&mut self.world, *node))
            }
        };
        self.log_actions(actor, &actions);
        self.schedule_followups(&actions);
        let acted = !actions.is_empty();
        if let Some(before) = before {
            self.records.push(InvocationRecord {
                op,
                before,
                actions,
            });
        }
        acted
    }

    /// A colony op that changed anything may have shifted the pool window;
    /// run upkeep right after (upkeep itself does not recurse).
    fn run_colony_op_with_upkeep(&mut self, op: ColonyOp) {
        if self.run_colony_op(op) {
            self.run_colony_op(ColonyOp::PoolMaintain);
        }
    }

    fn drain_queue(&mut self) {
        while let Some(request) = self.world.controller.queue.pop_front() {
            match self.params.policy {
                Policy::Ant => {
                    self.run_colony_op_with_upkeep(ColonyOp::Worker { request });
                }
                Policy::RoundRobin => {
                    let actions =
                        metrics::round_robin_allocate(&mut self.world, &request, &mut self.rr_cursor);
                    self.log_actions(Actor::Engine, &actions);
                    self.schedule_followups(&actions);
                }
                Policy::FirstFit => {
                    let actions = metrics::first_fit_allocate(&mut self.world, &request);
                    self.log_actions(Actor::Engine, &actions);
                    self.schedule_followups(&actions);
                }
            }
        }
    }

    fn dispatch(&mut self, ev: SimEvent) {
        match ev {
            SimEvent::RequestArrival(id) => {
                self.world.controller.queue.push_back(id);
                self.drain_queue();
            }
            SimEvent::AntSpawn(kind) => {
                let schedule = self.params.ants[&kind];
                let alive = self.ants.values().filter(|a| a.kind == kind).count();
                if alive < schedule.population {
                    let starts: Vec<NodeId> = self
                        .world
                        .nodes
                        .values()
                        .filter(|n| n.registered)
                        .map(|n| n.id)
                        .collect();
                    if !starts.is_empty() {
                        let start = starts[self.rng.gen_range(0..starts.len())];
                        let id = self.next_ant_id;
                        self.next_ant_id += 1;
                        self.ants
                            .insert(id, AntAgent::new(id, kind, start, self.world.now));
                        self.visit(kind, start);
                        self.push_event(
                            self.world.now + schedule.hop_interval_s,
                            SimEvent::AntHop(id),
                        );
                    }
                }
                self.push_event(
                    self.world.now + schedule.spawn_period_s,
                    SimEvent::AntSpawn(kind),
                );
            }
            SimEvent::AntHop(ant_id) => {
                let ant = self.ants.get(&ant_id).expect("ants live forever").clone();
                let next = ants::next_hop(&self.world, &ant, &mut self.rng);
                {
                    let ant = self.ants.get_mut(&ant_id).expect("ants live forever");
                    let world = &self.world;
                    ants::arrive(world, ant, next);
                }
                self.visit(ant.kind, next);
                let schedule = self.params.ants[&ant.kind];
                self.push_event(
                    self.world.now + schedule.hop_interval_s,
                    SimEvent::AntHop(ant_id),
                );
            }
            SimEvent::SampleMetrics => {
                let vm_ids: Vec<VmId> = self.world.vms.keys().copied().collect();
                for vm in vm_ids {
                    let code = self.world.refresh_vm(vm).code();
                    *self.slam_histogram.entry(code).or_insert(0) += 1;
                    self.observations += 1;
                }
                let active = self
                    .world
                    .nodes
                    .values()
                    .filter(|n| n.registered && n.responsive && n.state == NodeState::Active)
                    .count() as u64;
                self.active_series.push((self.world.now, active));
                let fleet_w: f64 = self
                    .world
                    .nodes
                    .values()
                    .map(|n| self.node_power(n))
                    .sum();
                self.power_series.push((self.world.now, fleet_w));
                self.push_event(
                    self.world.now + self.params.sample_interval_s,
                    SimEvent::SampleMetrics,
                );
            }
            SimEvent::NodeJoin(spec) => {
                let mut node = NodeRecord::new(
                    spec.id,
                    spec.cpu_capacity,
                    spec.mem_capacity,
                    spec.power,
                    NodeState::Off,
                );
                node.registered = false;
                node.last_seen = self.world.now;
                for n in &spec.neighbors {
                    node.neighbors.insert(*n);
                }
                for n in &spec.neighbors {
                    if let Some(other) = self.world.nodes.get_mut(n) {
                        other.neighbors.insert(spec.id);
                    }
                }
                self.world.nodes.insert(spec.id, node);
            }
            SimEvent::NodeFail(id) => {
                if let Some(node) = self.world.nodes.get_mut(&id) {
                    if node.responsive {
                        node.responsive = false;
                        node.last_seen = self.world.now;
                    }
                }
            }
            SimEvent::LeaseExpiry(vm_id) => {
                // Under the colony, cleaners carry leases out; the event is
                // just an accounting boundary. Baselines have no cleaners,
                // so the engine retires the VM here.
                if self.params.policy != Policy::Ant {
                    if let Some(vm) = self.world.vms.get(&vm_id) {
                        if vm.lease_expiry <= self.world.now {
                            let removed = self.world.remove_vm_record(vm_id);
                            let action = if removed.is_clone {
                                Action::RemoveClone {
                                    clone: vm_id,
                                    node: removed.host,
                                }
                            } else {
                                Action::RemoveVm {
                                    vm: vm_id,
                                    node: removed.host,
                                }
                            };
                            self.world.return_share(
                                &removed.request,
                                removed.traffic_share,
                                None,
                            );
                            self.log_actions(Actor::Engine, &[action]);
                        }
                    }
                }
            }
            SimEvent::TransitionComplete { node, epoch } => {
                if let Some(n) = self.world.nodes.get_mut(&node) {
                    if matches!(n.pending, Some(p) if p.epoch == epoch) {
                        n.pending = None;
                    }
                }
            }
            SimEvent::DemandChange => {}
        }
    }

    fn visit(&mut self, kind: AntKind, node: NodeId) {
        match kind {
            AntKind::Tester => {
                self.run_colony_op_with_upkeep(ColonyOp::TesterVisit { node });
            }
            AntKind::Cleaner => {
                self.run_colony_op_with_upkeep(ColonyOp::CleanerVisit { node });
                // Failure detection may have requeued admitted requests.
                self.drain_queue();
            }
            AntKind::Scout => {
                self.run_colony_op_with_upkeep(ColonyOp::ScoutVisit { node });
            }
        }
    }

    fn build_report(&mut self) -> MetricsReport {
        for id in self.world.nodes.keys() {
            self.meter.per_node.entry(*id).or_insert(0.0);
        }
        metrics::build_report(
            &self.params,
            &self.meter,
            self.violation_vm_seconds,
            self.observations,
            &self.slam_histogram,
            &self.active_series,
            &self.power_series,
            std::mem::take(&mut self.log),
        )
    }
}

/// Put the fleet into its starting posture. The colony keeps only the
/// pointer node awake with a warm standby pool behind it; the baselines run
/// everything hot.
fn apply_initial_states(world: &mut World, policy: Policy) {
    match policy {
        Policy::Ant => {
            let order: Vec<NodeId> = world.table.entries().iter().map(|e| e.node).collect();
            let pool = world.tunables.warm_pool_size;
            for (idx, id) in order.iter().enumerate() {
                let node = world.nodes.get_mut(id).expect("table nodes exist");
                node.state = if idx == 0 {
                    NodeState::Active
                } else if idx <= pool {
                    NodeState::Standby
                } else {
                    NodeState::Off
                };
            }
        }
        Policy::RoundRobin | Policy::FirstFit => {
            for node in world.nodes.values_mut() {
                node.state = NodeState::Active;
            }
        }
    }
}

/// Structural soundness of the whole world; used after every event in
/// testing and by the fuzz suites.
pub fn check_world(world: &World) -> Result<(), String> {
    const EPS: f64 = 1e-6;
    for (id, node) in &world.nodes {
        let mut cpu = 0.0;
        let mut mem = 0.0;
        for vm_id in &node.hosted {
            let vm = world
                .vms
                .get(vm_id)
                .ok_or_else(|| format!("node {id} lists missing vm {vm_id}"))?;
            if vm.host != *id {
                return Err(format!("vm {vm_id} host mismatch on node {id}"));
            }
            cpu += vm.cpu_entitlement;
            mem += vm.mem_entitlement;
        }
        if cpu > node.cpu_capacity + EPS || mem > node.mem_capacity + EPS {
            return Err(format!("node {id} oversubscribed: {cpu} / {mem}"));
        }
        if (node.cpu_capacity - cpu - node.remaining_cpu).abs() > EPS
            || (node.mem_capacity - mem - node.remaining_mem).abs() > EPS
        {
            return Err(format!("node {id} remaining capacity out of sync"));
        }
        if node.remaining_cpu < -EPS || node.remaining_mem < -EPS {
            return Err(format!("node {id} has negative remaining capacity"));
        }
        if node.state != NodeState::Active && !node.hosted.is_empty() {
            return Err(format!("non-active node {id} hosts VMs"));
        }
    }
    for (vm_id, vm) in &world.vms {
        let node = world
            .nodes
            .get(&vm.host)
            .ok_or_else(|| format!("vm {vm_id} hosted on missing node"))?;
        if !node.hosted.contains(vm_id) {
            return Err(format!("vm {vm_id} missing from host list"));
        }
        if vm.cpu_entitlement <= 0.0 || vm.mem_entitlement <= 0.0 {
            return Err(format!("vm {vm_id} has degenerate entitlement"));
        }
        if !(-EPS..=1.0 + EPS).contains(&vm.traffic_share) {
            return Err(format!("vm {vm_id} share {} out of range", vm.traffic_share));
        }
    }
    let mut share_sums: BTreeMap<&RequestId, f64> = BTreeMap::new();
    for vm in world.vms.values() {
        *share_sums.entry(&vm.request).or_insert(0.0) += vm.traffic_share;
    }
    for (request, sum) in share_sums {
        if (sum - 1.0).abs() > 1e-9 {
            return Err(format!("request {request} shares sum to {sum}"));
        }
    }
    let entries = world.table.entries();
    let mut seen = std::collections::BTreeSet::new();
    for pair in entries.windows(2) {
        let ordered = pair[0].key > pair[1].key
            || (pair[0].key == pair[1].key && pair[0].node < pair[1].node);
        if !ordered {
            return Err(format!(
                "table out of order at {} / {}",
                pair[0].node, pair[1].node
            ));
        }
    }
    for e in entries {
        if !seen.insert(e.node) {
            return Err(format!("node {} duplicated in table", e.node));
        }
        let node = world
            .nodes
            .get(&e.node)
            .ok_or_else(|| format!("table lists missing node {}", e.node))?;
        if !node.registered {
            return Err(format!("table lists unregistered node {}", e.node));
        }
    }
    for node in world.nodes.values() {
        if node.registered && !seen.contains(&node.id) {
            return Err(format!("registered node {} missing from table", node.id));
        }
    }
    if let Some(p) = world.table.pointer() {
        if p >= entries.len() {
            return Err(format!("pointer {p} out of range"));
        }
        let pn = entries[p].node;
        if world.nodes[&pn].state != NodeState::Active {
            return Err(format!("pointer node {pn} is not active"));
        }
    }
    Ok(())
}
