//! Node power model: instantaneous draw, state transition rules, and
//! exact energy integration over piecewise-constant utilization.

use std::collections::BTreeMap;

use serde::Serialize;
use thiserror::Error;

use crate::domain::{NodeId, NodeRecord, NodeState, PowerProfile};

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("utilization {0} outside [0, 1]")]
    UtilizationOutOfRange(f64),
    #[error("illegal transition {from:?} -> {to:?}: {reason}")]
    IllegalTransition {
        from: NodeState,
        to: NodeState,
        reason: String,
    },
    #[error("negative accounting interval: {from_t} -> {to_t}")]
    NegativeInterval { from_t: f64, to_t: f64 },
}

/// Draw of a node sitting plainly in `state` at the given utilization.
fn draw_at(profile: &PowerProfile, state: NodeState, u_cpu: f64, u_mem: f64) -> f64 {
    match state {
        NodeState::Active => profile.base_w + u_cpu * profile.cpu_peak_w + u_mem * profile.mem_peak_w,
        NodeState::Standby => profile.standby_w,
        NodeState::Off | NodeState::Failed => 0.0,
    }
}

/// Instantaneous power draw of a node, honoring a pending transition:
/// until the transition completes the node is billed at the worse of the
/// from-state and to-state draws, so waking is never cheaper than staying up.
pub fn instantaneous_power(node: &NodeRecord, u_cpu: f64, u_mem: f64) -> Result<f64, PowerError> {
    for u in [u_cpu, u_mem] {
        if !(0.0..=1.0 + 1e-9).contains(&u) || !u.is_finite() {
            return Err(PowerError::UtilizationOutOfRange(u));
        }
    }
    let here = draw_at(&node.power, node.state, u_cpu, u_mem);
    Ok(match &node.pending {
        Some(p) => here.max(draw_at(&node.power, p.from, u_cpu, u_mem)),
        None => here,
    })
}

/// Latency of a legal state transition, seconds. Hosting constraints are
/// checked by the caller, which can see the node's VM list.
pub fn transition_latency(
    from: NodeState,
    to: NodeState,
    profile: &PowerProfile,
) -> Result<f64, PowerError> {
    use NodeState::*;
    match (from, to) {
        (Active, Standby) | (Standby, Off) => Ok(0.0),
        (Standby, Active) => Ok(profile.wake_latency_s),
        (Off, Standby) => Ok(profile.boot_latency_s),
        // Waking a powered-off node chains boot and resume.
        (Off, Active) => Ok(profile.boot_latency_s + profile.wake_latency_s),
        (a, b) if a == b => Err(PowerError::IllegalTransition {
            from,
            to,
            reason: "node is already in the requested state".into(),
        }),
        (Failed, _) | (_, Failed) => Err(PowerError::IllegalTransition {
            from,
            to,
            reason: "failed nodes only leave the fleet".into(),
        }),
        _ => Err(PowerError::IllegalTransition {
            from,
            to,
            reason: "no such power path".into(),
        }),
    }
}

/// Per-node and fleet-wide energy totals, joules.
#[derive(Debug, Clone, Default, Serialize)]
pub struct EnergyMeter {
    pub per_node: BTreeMap<NodeId, f64>,
    pub fleet_j: f64,
}

impl EnergyMeter {
    pub fn new() -> Self {
        Self::default()
    }

    /// Add `watts` held constant over `[from_t, to_t]` to a node's total.
    /// Returns the joules added.
    pub fn accumulate(
        &mut self,
        node: NodeId,
        watts: f64,
        from_t: f64,
        to_t: f64,
    ) -> Result<f64, PowerError> {
        if to_t < from_t {
            return Err(PowerError::NegativeInterval { from_t, to_t });
        }
        let joules = watts * (to_t - from_t);
        *self.per_node.entry(node).or_insert(0.0) += joules;
        self.fleet_j += joules;
        Ok(joules)
    }

    pub fn node_total(&self, node: NodeId) -> f64 {
        self.per_node.get(&node).copied().unwrap_or(0.0)
    }
}
