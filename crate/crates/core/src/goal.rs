//! Developer goals: quality bounds plus relative weights.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::compact;
use crate::quality::{Qualities, QualityKind, Unit};
use crate::suc::SUM_TOLERANCE;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Operator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Operator {
    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Operator::Le => value <= threshold,
            Operator::Lt => value < threshold,
            Operator::Ge => value >= threshold,
            Operator::Gt => value > threshold,
        }
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Le => "<=",
            Operator::Lt => "<",
            Operator::Ge => ">=",
            Operator::Gt => ">",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bound {
    pub quality: QualityKind,
    pub operator: Operator,
    pub threshold: f64,
    pub unit: Unit,
}

impl Bound {
    /// A bound expressed in the quality's native unit.
    pub fn new(quality: QualityKind, operator: Operator, threshold: f64) -> Self {
        Bound {
            quality,
            operator,
            threshold,
            unit: quality.unit(),
        }
    }

    pub fn holds(&self, value: f64) -> bool {
        self.operator.holds(value, self.threshold)
    }

    /// Relative amount by which `value` misses the bound; 0 when it holds.
    pub fn excess(&self, value: f64) -> f64 {
        if self.holds(value) {
            return 0.0;
        }
        let scale = self.threshold.abs().max(1e-9);
        // strict operators at equality still count as a (tiny) miss
        ((value - self.threshold).abs() / scale).max(1e-12)
    }
}

impl fmt::Display for Bound {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{}{}{}",
            self.quality,
            self.operator,
            compact(self.threshold),
            self.unit
        )
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoalSpec {
    #[serde(default)]
    pub bounds: Vec<Bound>,
    #[serde(default)]
    pub weights: BTreeMap<QualityKind, f64>,
}

impl GoalSpec {
    pub fn weighted(weights: impl IntoIterator<Item = (QualityKind, f64)>) -> Self {
        GoalSpec {
            bounds: Vec::new(),
            weights: weights.into_iter().collect(),
        }
    }

    pub fn with_bound(mut self, bound: Bound) -> Self {
        self.bounds.push(bound);
        self
    }

    /// Bounds not met by `qualities`. A bound on a missing quality is an error.
    pub fn violated_bounds(&self, qualities: &Qualities) -> Result<Vec<Bound>> {
        let mut out = Vec::new();
        for b in &self.bounds {
            let v = *qualities
                .get(&b.quality)
                .ok_or(Error::UnmeasuredQuality(b.quality))?;
            if !b.holds(v) {
                out.push(*b);
            }
        }
        Ok(out)
    }

    /// Qualities that need a value to evaluate this goal.
    pub fn referenced_qualities(&self) -> Vec<QualityKind> {
        let mut q: Vec<_> = self
            .weights
            .keys()
            .copied()
            .chain(self.bounds.iter().map(|b| b.quality))
            .collect();
        q.sort();
        q.dedup();
        q
    }

    pub fn validate(&self) -> Result<()> {
        let r = validate_goal(self);
        if r.valid {
            Ok(())
        } else {
            Err(Error::Validation(r.violations))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationResult {
    pub valid: bool,
    pub violations: Vec<String>,
}

/// Checks weight and bound invariants, reporting every violation found.
pub fn validate_goal(goal: &GoalSpec) -> ValidationResult {
    let mut violations = Vec::new();
    if goal.bounds.is_empty() && goal.weights.is_empty() {
        violations.push("goal has neither bounds nor weights".to_string());
    }
    for (q, w) in &goal.weights {
        if !w.is_finite() || !(0.0..=1.0).contains(w) {
            violations.push(format!("weight of {q} is {w}, outside [0, 1]"));
        }
    }
    if !goal.weights.is_empty() {
        let sum: f64 = goal.weights.values().sum();
        if !sum.is_finite() || (sum - 1.0).abs() > SUM_TOLERANCE {
            violations.push(format!("weights sum to {}", compact(sum)));
        }
    }
    for b in &goal.bounds {
        if b.unit != b.quality.unit() {
            violations.push(format!(
                "bound on {} uses unit `{}`, expected `{}`",
                b.quality,
                b.unit,
                b.quality.unit()
            ));
        }
        if !b.threshold.is_finite() {
            violations.push(format!("bound on {} has non-finite threshold", b.quality));
        }
        if b.quality == QualityKind::Reliability && !(0.0..=1.0).contains(&b.threshold) {
            violations.push(format!(
                "reliability bound {} outside [0, 1]",
                compact(b.threshold)
            ));
        }
    }
    ValidationResult {
        valid: violations.is_empty(),
        violations,
    }
}
