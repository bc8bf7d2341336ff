//! Observations: platform telemetry joined with client-side measurements.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::policy::Policy;
use crate::quality::{Qualities, QualityKind};

/// Per-invocation record reported by the platform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TelemetryRecord {
    pub invocation: u64,
    pub deployment: u64,
    pub function: String,
    /// Virtual start time (ms).
    pub started_at: u64,
    /// Measured execution time (ms), unrounded.
    pub duration: f64,
    /// Duration rounded up to the billing quantum (ms).
    pub billed_duration: u64,
    pub memory_size: u32,
    pub cold_start: bool,
    pub billed_cost: f64,
    pub throttled: bool,
    pub failed: bool,
}

/// Work-based billing: GB allocated times billed seconds, plus a flat fee.
pub fn billed_cost(
    memory_size: u32,
    billed_duration: u64,
    price_per_gb_second: f64,
    price_per_invocation: f64,
) -> f64 {
    (memory_size as f64 / 1024.0) * (billed_duration as f64 / 1000.0) * price_per_gb_second
        + price_per_invocation
}

/// Rounds a duration up to the next multiple of `quantum` ms.
pub fn billed_duration(duration: f64, quantum: u64) -> u64 {
    let q = quantum.max(1);
    let units = (duration / q as f64).ceil().max(0.0) as u64;
    units * q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    ColdStart,
    Throttled,
    Failed,
}

impl fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InvalidReason::ColdStart => "cold_start",
            InvalidReason::Throttled => "throttled",
            InvalidReason::Failed => "failed",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sample {
    /// Function observed, or the SUC name for end-to-end composition runs.
    pub function: String,
    pub policy: Policy,
    pub workload_class: String,
    pub qualities: Qualities,
    pub telemetry: TelemetryRecord,
    pub valid: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub invalid_reason: Option<InvalidReason>,
    pub virtual_timestamp: u64,
}

impl Sample {
    pub fn quality(&self, kind: QualityKind) -> Option<f64> {
        self.qualities.get(&kind).copied()
    }

    pub fn succeeded(&self) -> bool {
        !self.telemetry.failed && !self.telemetry.throttled
    }

    pub fn memory_size(&self) -> u32 {
        self.telemetry.memory_size
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (q, v) in &self.qualities {
            if !(*v >= 0.0) {
                out.push(format!("{q} is negative or NaN"));
            }
        }
        if let Some(r) = self.qualities.get(&QualityKind::Reliability) {
            if *r > 1.0 {
                out.push("Reliability above 1".into());
            }
        }
        if !self.valid && self.invalid_reason.is_none() {
            out.push("invalidated sample without reason code".into());
        }
        out
    }
}
