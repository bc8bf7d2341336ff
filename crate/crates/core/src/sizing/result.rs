use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::experiment::TacticConfig;
use crate::goal::Bound;
use crate::modeling::Provenance;
use crate::policy::Policy;
use crate::quality::Qualities;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SizingStatus {
    /// Every bound holds under the predicted qualities.
    Feasible,
    /// No point satisfied the bounds; `policy` is the nearest miss.
    Infeasible,
    /// The search had no budget; `policy` is the initial state.
    Unoptimized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMethod {
    BruteForce,
    Anneal,
    SampleBased,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchStats {
    pub method: SearchMethod,
    pub iterations: u64,
    pub evaluations: u64,
    /// Virtual matching time (ms) from the compute cost model.
    pub elapsed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParetoPoint {
    pub policy: Policy,
    pub predicted: Qualities,
    pub zf_score: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SizingProvenance {
    /// Model store keys (file names) used, per function and class.
    pub model_keys: Vec<String>,
    pub model_provenance: BTreeMap<String, Provenance>,
    pub tactics: TacticConfig,
    pub warnings: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub applied_deployment: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingResult {
    pub status: SizingStatus,
    pub policy: Policy,
    pub predicted: Qualities,
    pub zf_score: f64,
    pub violated_bounds: Vec<Bound>,
    /// Non-dominated feasible points, best ZF first.
    pub pareto_front: Vec<ParetoPoint>,
    pub search_stats: SearchStats,
    pub provenance: SizingProvenance,
}

impl SizingResult {
    pub fn is_feasible(&self) -> bool {
        self.violated_bounds.is_empty()
    }
}
