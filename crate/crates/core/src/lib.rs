//! Deterministic discrete-event simulator of a cloud data center whose
//! resource allocation, load balancing, consolidation, and power management
//! are carried out by a colony of roaming agents.
//!
//! The colony keeps a shared table of nodes ordered by energy efficiency
//! with an allocation pointer; worker agents admit requests at the pointer,
//! tester agents detect overload and drain underused nodes, scout agents
//! register newly discovered machines, and cleaner agents retire surplus
//! clones, expire leases, and notice dead nodes. Two always-on baseline
//! policies (first-fit and round-robin) run in the same engine for
//! energy/service comparisons.
//!
//! Everything is deterministic: a scenario file plus a seed reproduces a
//! run byte for byte, including its JSON report.

pub mod ants;
pub mod cli;
pub mod config;
pub mod domain;
pub mod engine;
pub mod metrics;
pub mod power;
pub mod sla;
pub mod workload;
pub mod world;

/// Crate version, as reported by the CLI and the C ABI.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
