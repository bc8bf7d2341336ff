//! Tactic configuration and the registry mapping each tactic to the code
//! path that realizes it.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::Bound;
use crate::suc::KnobKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum FunctionType {
    #[default]
    ExponentialDecay,
    None,
}

fn yes() -> bool {
    true
}

/// Toggles for the nine tactics. Absent fields take the defaults below.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TacticConfig {
    #[serde(default)]
    pub isolate_executions: bool,
    #[serde(default = "yes")]
    pub automate_ops: bool,
    #[serde(default)]
    pub manifold_testbeds: bool,
    #[serde(default)]
    pub constant_quality_knobs: Vec<KnobKind>,
    #[serde(default)]
    pub monotonic_prune: Option<Bound>,
    #[serde(default)]
    pub assume_function_type: FunctionType,
    /// Model set to reuse: a SUC hash, or `any` for the newest stored model.
    #[serde(default)]
    pub reuse_model: Option<String>,
    #[serde(default = "yes")]
    pub decompose_composition: bool,
    #[serde(default = "yes")]
    pub workload_classes_known: bool,
}

impl Default for TacticConfig {
    fn default() -> Self {
        TacticConfig {
            isolate_executions: false,
            automate_ops: true,
            manifold_testbeds: false,
            constant_quality_knobs: Vec::new(),
            monotonic_prune: None,
            assume_function_type: FunctionType::ExponentialDecay,
            reuse_model: None,
            decompose_composition: true,
            workload_classes_known: true,
        }
    }
}

impl TacticConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.manifold_testbeds && self.monotonic_prune.is_some() {
            out.push(
                "manifold_testbeds (T3) and monotonic_prune (T5) are mutually exclusive".into(),
            );
        }
        if self.constant_quality_knobs.contains(&KnobKind::Memory) {
            out.push("the memory knob is the optimization target and cannot be constant".into());
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn applied(&self) -> Vec<Tactic> {
        Tactic::ALL
            .into_iter()
            .filter(|t| t.enabled(self))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Tactic {
    T1,
    T2,
    T3,
    T4,
    T5,
    T6,
    T7,
    T8,
    T9,
}

impl Tactic {
    pub const ALL: [Tactic; 9] = [
        Tactic::T1,
        Tactic::T2,
        Tactic::T3,
        Tactic::T4,
        Tactic::T5,
        Tactic::T6,
        Tactic::T7,
        Tactic::T8,
        Tactic::T9,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Tactic::T1 => "isolate executions",
            Tactic::T2 => "automate operational tasks",
            Tactic::T3 => "manifold testbeds",
            Tactic::T4 => "constant quality function",
            Tactic::T5 => "monotonic quality function",
            Tactic::T6 => "quality function type",
            Tactic::T7 => "quality function",
            Tactic::T8 => "composition type",
            Tactic::T9 => "workload",
        }
    }

    /// Where the tactic takes effect.
    pub fn realization(self) -> &'static str {
        match self {
            Tactic::T1 => "experiment::execute_plan reduces runs per size by the isolation discount",
            Tactic::T2 => "experiment::execute_plan deploys through the platform API; manual ops add a fixed delay per deployment",
            Tactic::T3 => "experiment::execute_plan in Manifold mode overlaps all size variants",
            Tactic::T4 => "experiment::skip_constant_knobs fixes quality-neutral knobs",
            Tactic::T5 => "experiment::monotonic_prune_sweep omits sizes past the first bound violation",
            Tactic::T6 => "modeling::fit_exponential_decay interpolates between sampled sizes",
            Tactic::T7 => "modeling::get_or_build_model serves stored models without sampling",
            Tactic::T8 => "sizing::aggregate_composition combines per-function models",
            Tactic::T9 => "experiment plans sample only the declared workload classes",
        }
    }

    pub fn enabled(self, c: &TacticConfig) -> bool {
        match self {
            Tactic::T1 => c.isolate_executions,
            Tactic::T2 => c.automate_ops,
            Tactic::T3 => c.manifold_testbeds,
            Tactic::T4 => !c.constant_quality_knobs.is_empty(),
            Tactic::T5 => c.monotonic_prune.is_some(),
            Tactic::T6 => c.assume_function_type != FunctionType::None,
            Tactic::T7 => c.reuse_model.is_some(),
            Tactic::T8 => c.decompose_composition,
            Tactic::T9 => c.workload_classes_known,
        }
    }
}

impl fmt::Display for Tactic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} ({})", self, self.name())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::Operator;
    use crate::quality::QualityKind;

    #[test]
    fn manifold_and_prune_are_exclusive() {
        let c = TacticConfig {
            manifold_testbeds: true,
            monotonic_prune: Some(Bound::new(QualityKind::ELat, Operator::Le, 1000.0)),
            ..TacticConfig::default()
        };
        assert!(c.validate().is_err());
        let text = r#"{"manifold_testbeds":true,"monotonic_prune":{"quality":"ELat","operator":"<=","threshold":1000.0,"unit":"ms"}}"#;
        let parsed: TacticConfig = serde_json::from_str(text).unwrap();
        assert!(parsed.validate().is_err());
    }

    #[test]
    fn defaults_enable_automation_decomposition_and_workload_knowledge() {
        let c: TacticConfig = serde_json::from_str("{}").unwrap();
        assert_eq!(c, TacticConfig::default());
        assert_eq!(
            c.applied(),
            vec![Tactic::T2, Tactic::T6, Tactic::T8, Tactic::T9]
        );
    }

    #[test]
    fn every_tactic_has_a_realization() {
        for t in Tactic::ALL {
            assert!(!t.realization().is_empty());
        }
    }
}
