//! System qualities and their units.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

/// Observable system quality. Units are fixed per kind and never converted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum QualityKind {
    /// Client-side request-response latency (ms).
    RLat,
    /// Execution latency as measured by the platform (ms).
    ELat,
    /// Marginal execution cost (USD).
    ECost,
    /// Completed requests per second.
    Throughput,
    /// Success fraction in [0, 1].
    Reliability,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Unit {
    #[serde(rename = "ms")]
    Milliseconds,
    #[serde(rename = "USD")]
    Usd,
    #[serde(rename = "req/s")]
    RequestsPerSecond,
    #[serde(rename = "1")]
    Dimensionless,
}

impl QualityKind {
    pub const ALL: [QualityKind; 5] = [
        QualityKind::RLat,
        QualityKind::ELat,
        QualityKind::ECost,
        QualityKind::Throughput,
        QualityKind::Reliability,
    ];

    pub fn unit(self) -> Unit {
        match self {
            QualityKind::RLat | QualityKind::ELat => Unit::Milliseconds,
            QualityKind::ECost => Unit::Usd,
            QualityKind::Throughput => Unit::RequestsPerSecond,
            QualityKind::Reliability => Unit::Dimensionless,
        }
    }

    /// Whether larger values are preferred.
    pub fn higher_is_better(self) -> bool {
        matches!(self, QualityKind::Throughput | QualityKind::Reliability)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            QualityKind::RLat => "RLat",
            QualityKind::ELat => "ELat",
            QualityKind::ECost => "ECost",
            QualityKind::Throughput => "Throughput",
            QualityKind::Reliability => "Reliability",
        }
    }
}

impl fmt::Display for QualityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl fmt::Display for Unit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Unit::Milliseconds => "ms",
            Unit::Usd => "USD",
            Unit::RequestsPerSecond => "req/s",
            Unit::Dimensionless => "",
        })
    }
}

/// Quality values keyed by kind.
pub type Qualities = BTreeMap<QualityKind, f64>;
