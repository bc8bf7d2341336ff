//! System under configuration: functions, their knobs, and the composition
//! that wires them together.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance applied to every "sums to one" check.
pub const SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum KnobKind {
    /// Memory size in MB.
    Memory,
    /// Number of concurrent executions hosted by one slot.
    SlotConcurrency,
    /// Function tags and other metadata with no quality impact.
    Tag,
}

impl fmt::Display for KnobKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Arithmetic progression `start, start + step, ..` up to and including `end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RangeDomain {
    pub start: u32,
    pub end: u32,
    pub step: u32,
}

/// Ordered set of admissible knob values, either listed or as a range.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Domain {
    Values(Vec<u32>),
    Range(RangeDomain),
}

impl Domain {
    /// Memory sizes 128..=10240 MB in 1 MB steps.
    pub fn memory_default() -> Self {
        Domain::Range(RangeDomain {
            start: 128,
            end: 10240,
            step: 1,
        })
    }

    pub fn values(values: impl Into<Vec<u32>>) -> Self {
        Domain::Values(values.into())
    }

    pub fn len(&self) -> usize {
        match self {
            Domain::Values(v) => v.len(),
            Domain::Range(r) => {
                if r.step == 0 || r.end < r.start {
                    0
                } else {
                    ((r.end - r.start) / r.step) as usize + 1
                }
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Value at position `index`. Panics when out of range.
    pub fn get(&self, index: usize) -> u32 {
        match self {
            Domain::Values(v) => v[index],
            Domain::Range(r) => {
                assert!(index < self.len(), "domain index {index} out of range");
                r.start + r.step * index as u32
            }
        }
    }

    pub fn first(&self) -> u32 {
        self.get(0)
    }

    pub fn last(&self) -> u32 {
        self.get(self.len() - 1)
    }

    pub fn index_of(&self, value: u32) -> Option<usize> {
        match self {
            Domain::Values(v) => v.binary_search(&value).ok(),
            Domain::Range(r) => {
                if value < r.start || value > r.end || r.step == 0 {
                    return None;
                }
                let offset = value - r.start;
                (offset.is_multiple_of(r.step) && (offset / r.step) < self.len() as u32)
                    .then(|| (offset / r.step) as usize)
            }
        }
    }

    pub fn contains(&self, value: u32) -> bool {
        self.index_of(value).is_some()
    }

    /// Index of the member nearest to `position`; ties go to the smaller member.
    pub fn nearest_index(&self, position: f64) -> usize {
        let n = self.len();
        // first index whose value is >= position
        let (mut lo, mut hi) = (0usize, n);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if (self.get(mid) as f64) < position {
                lo = mid + 1;
            } else {
                hi = mid;
            }
        }
        if lo == 0 {
            return 0;
        }
        if lo == n {
            return n - 1;
        }
        let below = position - self.get(lo - 1) as f64;
        let above = self.get(lo) as f64 - position;
        if above < below {
            lo
        } else {
            lo - 1
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = u32> + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    fn violations(&self, context: &str, out: &mut Vec<String>) {
        match self {
            Domain::Values(v) => {
                if v.is_empty() {
                    out.push(format!("{context}: domain is empty"));
                }
                if v.windows(2).any(|w| w[0] >= w[1]) {
                    out.push(format!("{context}: domain is not strictly increasing"));
                }
            }
            Domain::Range(r) => {
                if r.step == 0 {
                    out.push(format!("{context}: range step must be at least 1"));
                }
                if r.end < r.start {
                    out.push(format!(
                        "{context}: range end {} < start {}",
                        r.end, r.start
                    ));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KnobSpec {
    pub kind: KnobKind,
    pub domain: Domain,
    /// The knob does not affect any quality and may be fixed without sampling.
    #[serde(default)]
    pub quality_neutral: bool,
}

impl KnobSpec {
    pub fn memory(domain: Domain) -> Self {
        KnobSpec {
            kind: KnobKind::Memory,
            domain,
            quality_neutral: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FunctionSpec {
    pub name: String,
    pub knobs: Vec<KnobSpec>,
    /// Opaque handler reference; the simulator ignores it.
    #[serde(default)]
    pub handler_ref: String,
}

impl FunctionSpec {
    pub fn with_memory(name: impl Into<String>, domain: Domain) -> Self {
        let name = name.into();
        FunctionSpec {
            handler_ref: name.clone(),
            name,
            knobs: vec![KnobSpec::memory(domain)],
        }
    }

    pub fn knob(&self, kind: KnobKind) -> Option<&KnobSpec> {
        self.knobs.iter().find(|k| k.kind == kind)
    }

    /// The memory knob's domain. Validated SUCs always have one.
    pub fn memory_domain(&self) -> &Domain {
        &self
            .knob(KnobKind::Memory)
            .expect("function without memory knob")
            .domain
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SwitchBranch {
    pub probability: f64,
    pub child: CompositionNode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CompositionNode {
    FunctionRef(String),
    Sequence(Vec<CompositionNode>),
    Parallel(Vec<CompositionNode>),
    Switch(Vec<SwitchBranch>),
}

impl CompositionNode {
    pub fn function(name: impl Into<String>) -> Self {
        CompositionNode::FunctionRef(name.into())
    }

    /// Names referenced anywhere below this node, in first-seen order.
    pub fn function_refs(&self) -> Vec<&str> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        let mut seen = BTreeSet::new();
        out.retain(|n| seen.insert(*n));
        out
    }

    fn collect_refs<'a>(&'a self, out: &mut Vec<&'a str>) {
        match self {
            CompositionNode::FunctionRef(n) => out.push(n),
            CompositionNode::Sequence(c) | CompositionNode::Parallel(c) => {
                c.iter().for_each(|n| n.collect_refs(out))
            }
            CompositionNode::Switch(b) => b.iter().for_each(|b| b.child.collect_refs(out)),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            CompositionNode::FunctionRef(_) => 1,
            CompositionNode::Sequence(c) | CompositionNode::Parallel(c) => {
                1 + c.iter().map(Self::depth).max().unwrap_or(0)
            }
            CompositionNode::Switch(b) => 1 + b.iter().map(|b| b.child.depth()).max().unwrap_or(0),
        }
    }

    fn violations(&self, known: &BTreeSet<&str>, out: &mut Vec<String>) {
        match self {
            CompositionNode::FunctionRef(n) => {
                if !known.contains(n.as_str()) {
                    out.push(format!("composition references unknown function `{n}`"));
                }
            }
            CompositionNode::Sequence(c) | CompositionNode::Parallel(c) => {
                if c.is_empty() {
                    out.push("composition node without children".to_string());
                }
                c.iter().for_each(|n| n.violations(known, out));
            }
            CompositionNode::Switch(branches) => {
                if branches.is_empty() {
                    out.push("switch without branches".to_string());
                }
                let mut sum = 0.0;
                for b in branches {
                    if !(0.0..=1.0).contains(&b.probability) {
                        out.push(format!(
                            "switch branch probability {} outside [0, 1]",
                            b.probability
                        ));
                    }
                    sum += b.probability;
                    b.child.violations(known, out);
                }
                if !branches.is_empty() && (sum - 1.0).abs() > SUM_TOLERANCE {
                    out.push(format!(
                        "switch probabilities sum to {}",
                        crate::json::compact(sum)
                    ));
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompositionSpec {
    pub root: CompositionNode,
}

/// The serverless system being configured.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemUnderConfiguration {
    pub name: String,
    pub functions: Vec<FunctionSpec>,
    pub composition: CompositionSpec,
}

impl SystemUnderConfiguration {
    /// A sequence over `functions` in the given order.
    pub fn chain(name: impl Into<String>, functions: Vec<FunctionSpec>) -> Self {
        let root = CompositionNode::Sequence(
            functions
                .iter()
                .map(|f| CompositionNode::function(f.name.clone()))
                .collect(),
        );
        SystemUnderConfiguration {
            name: name.into(),
            functions,
            composition: CompositionSpec { root },
        }
    }

    pub fn single(function: FunctionSpec) -> Self {
        let root = CompositionNode::function(function.name.clone());
        SystemUnderConfiguration {
            name: function.name.clone(),
            functions: vec![function],
            composition: CompositionSpec { root },
        }
    }

    pub fn function(&self, name: &str) -> Option<&FunctionSpec> {
        self.functions.iter().find(|f| f.name == name)
    }

    pub fn function_index(&self, name: &str) -> Option<usize> {
        self.functions.iter().position(|f| f.name == name)
    }

    pub fn function_names(&self) -> impl Iterator<Item = &str> {
        self.functions.iter().map(|f| f.name.as_str())
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let mut names = BTreeSet::new();
        if self.functions.is_empty() {
            out.push("system has no functions".to_string());
        }
        for f in &self.functions {
            if !names.insert(f.name.as_str()) {
                out.push(format!("duplicate function name `{}`", f.name));
            }
            let memory_knobs = f
                .knobs
                .iter()
                .filter(|k| k.kind == KnobKind::Memory)
                .count();
            if memory_knobs != 1 {
                out.push(format!(
                    "function `{}` has {memory_knobs} memory knobs, expected exactly one",
                    f.name
                ));
            }
            let mut kinds = BTreeSet::new();
            for k in &f.knobs {
                if !kinds.insert(k.kind) && k.kind != KnobKind::Memory {
                    out.push(format!("function `{}` repeats knob {}", f.name, k.kind));
                }
                k.domain
                    .violations(&format!("function `{}` knob {}", f.name, k.kind), &mut out);
            }
        }
        self.composition.root.violations(&names, &mut out);
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

    /// Content fingerprint of the description.
    pub fn fingerprint(&self) -> String {
        crate::json::fingerprint(self)
    }
}
