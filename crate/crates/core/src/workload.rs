//! Offered-load modeling: piecewise-constant request-rate traces, the
//! generators that materialize them, and a plain-text trace file parser.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum WorkloadError {
    #[error("trace needs at least one breakpoint")]
    Empty,
    #[error("breakpoint times must start at 0 and strictly increase (index {0})")]
    UnorderedBreakpoints(usize),
    #[error("rate must be finite and non-negative at breakpoint {0}")]
    InvalidRate(usize),
    #[error("per-request demand must be finite and positive at breakpoint {0}")]
    InvalidDemand(usize),
    #[error("line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
}

/// One segment boundary: from `t` onward the trace offers `rate` requests
/// per second, each costing `demand` capacity units of work.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Breakpoint {
    pub t: f64,
    pub rate: f64,
    pub demand: f64,
}

/// A piecewise-constant offered-load trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WorkloadTrace {
    breakpoints: Vec<Breakpoint>,
}

impl WorkloadTrace {
    pub fn new(breakpoints: Vec<Breakpoint>) -> Result<Self, WorkloadError> {
        if breakpoints.is_empty() {
            return Err(WorkloadError::Empty);
        }
        for (i, bp) in breakpoints.iter().enumerate() {
            let prev_t = if i == 0 { -1.0 } else { breakpoints[i - 1].t };
            let start_ok = i > 0 || bp.t == 0.0;
            if !start_ok || !bp.t.is_finite() || bp.t <= prev_t {
                return Err(WorkloadError::UnorderedBreakpoints(i));
            }
            if !bp.rate.is_finite() || bp.rate < 0.0 {
                return Err(WorkloadError::InvalidRate(i));
            }
            if !bp.demand.is_finite() || bp.demand <= 0.0 {
                return Err(WorkloadError::InvalidDemand(i));
            }
        }
        Ok(WorkloadTrace { breakpoints })
    }

    pub fn constant(rate: f64, demand: f64) -> Result<Self, WorkloadError> {
        WorkloadTrace::new(vec![Breakpoint { t: 0.0, rate, demand }])
    }

    /// A base level replaced by a new level from `step_at` onward.
    pub fn step(
        base_rate: f64,
        step_rate: f64,
        step_at: f64,
        demand: f64,
    ) -> Result<Self, WorkloadError> {
        WorkloadTrace::new(vec![
            Breakpoint { t: 0.0, rate: base_rate, demand },
            Breakpoint { t: step_at, rate: step_rate, demand },
        ])
    }

    /// A day-night sine profile `mean + amplitude * sin(2*pi*t/period)`,
    /// discretized into steps of `resolution` seconds over one period and
    /// clamped at zero. The engine repeats the trace value of the last
    /// breakpoint beyond the period, so `horizon` extends the sampling.
    pub fn diurnal(
        mean_rate: f64,
        amplitude: f64,
        period: f64,
        resolution: f64,
        horizon: f64,
        demand: f64,
    ) -> Result<Self, WorkloadError> {
        if !(period.is_finite() && period > 0.0) || !(resolution.is_finite() && resolution > 0.0) {
            return Err(WorkloadError::InvalidRate(0));
        }
        let mut breakpoints = Vec::new();
        let mut t = 0.0;
        let end = horizon.max(resolution);
        while t < end {
            let phase = 2.0 * std::f64::consts::PI * t / period;
            let rate = (mean_rate + amplitude * phase.sin()).max(0.0);
            breakpoints.push(Breakpoint { t, rate, demand });
            t += resolution;
        }
        WorkloadTrace::new(breakpoints)
    }

    fn segment_at(&self, t: f64) -> &Breakpoint {
        match self.breakpoints.iter().rposition(|bp| bp.t <= t) {
            Some(i) => &self.breakpoints[i],
            None => &self.breakpoints[0],
        }
    }

    /// Offered request rate at time `t`, 1/s.
    pub fn rate_at(&self, t: f64) -> f64 {
        self.segment_at(t).rate
    }

    /// Per-request capacity demand at time `t`.
    pub fn demand_at(&self, t: f64) -> f64 {
        self.segment_at(t).demand
    }

    /// Times where the offered load changes; the engine schedules an
    /// accounting boundary at each.
    pub fn change_times(&self) -> impl Iterator<Item = f64> + '_ {
        self.breakpoints.iter().skip(1).map(|bp| bp.t)
    }

    pub fn breakpoints(&self) -> &[Breakpoint] {
        &self.breakpoints
    }
}

/// Parse a multi-workload trace file. Each non-empty, non-comment line is
/// `name,t,rate,demand`; lines starting with `#` are comments. Rows of one
/// name form that workload's breakpoints and must be listed in time order.
pub fn parse_trace(text: &str) -> Result<BTreeMap<String, WorkloadTrace>, WorkloadError> {
    let mut rows: BTreeMap<String, Vec<Breakpoint>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(WorkloadError::Parse {
                line,
                column: 1,
                message: format!("expected 4 comma-separated fields, got {}", fields.len()),
            });
        }
        let name = fields[0];
        if name.is_empty() {
            return Err(WorkloadError::Parse {
                line,
                column: 1,
                message: "workload name is empty".into(),
            });
        }
        let parse_field = |idx: usize, label: &str| -> Result<f64, WorkloadError> {
            let column = raw.find(fields[idx]).map(|c| c + 1).unwrap_or(1);
            fields[idx].parse::<f64>().map_err(|e| WorkloadError::Parse {
                line,
                column,
                message: format!("bad {label} value {:?}: {e}", fields[idx]),
            })
        };
        let t = parse_field(1, "time")?;
        let rate = parse_field(2, "rate")?;
        let demand = parse_field(3, "demand")?;
        if !rows.contains_key(name) {
            order.push(name.to_string());
        }
        rows.entry(name.to_string())
            .or_default()
            .push(Breakpoint { t, rate, demand });
    }
    let mut out = BTreeMap::new();
    for name in order {
        let bps = rows.remove(&name).unwrap();
        let trace = WorkloadTrace::new(bps).map_err(|e| match e {
            WorkloadError::Parse { .. } => e,
            other => WorkloadError::Parse {
                line: 0,
                column: 0,
                message: format!("workload {name:?}: {other}"),
            },
        })?;
        out.insert(name, trace);
    }
    if out.is_empty() {
        return Err(WorkloadError::Empty);
    }
    Ok(out)
}
