//! Service-level monitoring: per-VM performance observations and the
//! two-digit SLAM verdict derived from them.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::SlamCode;

#[derive(Debug, Error, PartialEq)]
pub enum SlaError {
    #[error("service rate must be positive, got {0}")]
    DegenerateServiceRate(f64),
    #[error("offered rate must be finite and non-negative, got {0}")]
    InvalidOfferedRate(f64),
    #[error("targets must be positive, got rtime {rtime} / thput {thput}")]
    InvalidTargets { rtime: f64, thput: f64 },
}

/// One measured performance sample for a VM.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SlaObservation {
    /// Mean response time, seconds.
    pub rtime_s: f64,
    /// Delivered fraction of offered traffic, in [0, 1].
    pub thput: f64,
    /// Offered request rate the sample was taken at, 1/s.
    pub offered_rate: f64,
}

/// Model a VM as a single-server queue: offered rate `lambda`, service rate
/// `mu` (entitlement divided by per-request demand). Response time follows
/// 1/(mu - lambda), clamped to `saturation_rtime` at and beyond saturation;
/// delivered throughput degrades as min(lambda, mu)/lambda.
pub fn observe(lambda: f64, mu: f64, saturation_rtime: f64) -> Result<SlaObservation, SlaError> {
    if !lambda.is_finite() || lambda < 0.0 {
        return Err(SlaError::InvalidOfferedRate(lambda));
    }
    if !mu.is_finite() || mu <= 0.0 {
        return Err(SlaError::DegenerateServiceRate(mu));
    }
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
    Ok(SlaObservation {
        rtime_s,
        thput,
        offered_rate: lambda,
    })
}

/// Band factors applied to a request's agreed response time (RTIME) and
/// throughput (THPUT) targets. With the defaults, response time enters the
/// warning band at 90% of the ceiling and is critical from 95%; throughput
/// is critical at or below 1.05x the floor and in the warning band up to
/// 1.10x of it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SlamThresholds {
    pub rtime_ok: f64,
    pub rtime_critical: f64,
    pub thput_critical: f64,
    pub thput_ok: f64,
}

impl Default for SlamThresholds {
    fn default() -> Self {
        SlamThresholds {
            rtime_ok: 0.90,
            rtime_critical: 0.95,
            thput_critical: 1.05,
            thput_ok: 1.10,
        }
    }
}

impl SlamThresholds {
    pub fn validate(&self) -> Result<(), SlaError> {
        let ordered = 0.0 < self.rtime_ok
            && self.rtime_ok < self.rtime_critical
            && 1.0 <= self.thput_critical
            && self.thput_critical < self.thput_ok;
        if ordered {
            Ok(())
        } else {
            Err(SlaError::InvalidTargets {
                rtime: self.rtime_ok,
                thput: self.thput_critical,
            })
        }
    }
}

/// Classify an observation against the request's agreed targets.
///
/// The critical band wins over the warning band, and within a band a
/// response-time breach wins over a throughput breach: response-time
/// pressure calls for cloning (codes x2), throughput pressure alone calls
/// for migration (codes x1).
pub fn compute_slam(
    rtime_target: f64,
    thput_target: f64,
    obs: &SlaObservation,
    th: &SlamThresholds,
) -> Result<SlamCode, SlaError> {
    if !(rtime_target.is_finite() && rtime_target > 0.0)
        || !(thput_target.is_finite() && thput_target > 0.0)
    {
        return Err(SlaError::InvalidTargets {
            rtime: rtime_target,
            thput: thput_target,
        });
    }
    let rtime_crit = obs.rtime_s >= th.rtime_critical * rtime_target;
    let thput_crit = obs.thput <= th.thput_critical * thput_target;
    if rtime_crit || thput_crit {
        return Ok(if rtime_crit {
            SlamCode::CriticalClone
        } else {
            SlamCode::CriticalMigrate
        });
    }
    let rtime_warn = obs.rtime_s >= th.rtime_ok * rtime_target;
    let thput_warn = obs.thput <= th.thput_ok * thput_target;
    if rtime_warn || thput_warn {
        return Ok(if rtime_warn {
            SlamCode::RecommendClone
        } else {
            SlamCode::RecommendMigrate
        });
    }
    Ok(SlamCode::Ok)
}
