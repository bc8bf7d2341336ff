//! Policies (complete knob assignments) and the configuration space they span.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::suc::{Domain, KnobKind, SystemUnderConfiguration};

/// Default ceiling for exhaustive enumeration.
pub const DEFAULT_ENUMERATION_CAP: u128 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Policy {
    pub assignments: BTreeMap<String, BTreeMap<KnobKind, u32>>,
}

impl Policy {
    /// Every non-neutral knob at the first value of its domain.
    pub fn baseline(suc: &SystemUnderConfiguration) -> Self {
        let mut p = Policy::default();
        for f in &suc.functions {
            for k in f.knobs.iter().filter(|k| !k.quality_neutral) {
                p.set(&f.name, k.kind, k.domain.first());
            }
        }
        p
    }

    /// Memory sizes in function order, other knobs at their baseline.
    pub fn from_memory(suc: &SystemUnderConfiguration, sizes: &[u32]) -> Self {
        let mut p = Policy::baseline(suc);
        for (f, &m) in suc.functions.iter().zip(sizes) {
            p.set(&f.name, KnobKind::Memory, m);
        }
        p
    }

    pub fn set(&mut self, function: &str, knob: KnobKind, value: u32) {
        self.assignments
            .entry(function.to_string())
            .or_default()
            .insert(knob, value);
    }

    pub fn get(&self, function: &str, knob: KnobKind) -> Option<u32> {
        self.assignments.get(function)?.get(&knob).copied()
    }

    pub fn memory(&self, function: &str) -> Option<u32> {
        self.get(function, KnobKind::Memory)
    }

    /// Memory sizes in the SUC's function order.
    pub fn memory_vector(&self, suc: &SystemUnderConfiguration) -> Vec<u32> {
        suc.functions
            .iter()
            .map(|f| self.memory(&f.name).unwrap_or(0))
            .collect()
    }

    pub fn total_memory(&self) -> u64 {
        self.assignments
            .values()
            .filter_map(|k| k.get(&KnobKind::Memory))
            .map(|&m| m as u64)
            .sum()
    }

    pub fn violations(&self, suc: &SystemUnderConfiguration) -> Vec<String> {
        let mut out = Vec::new();
        for name in self.assignments.keys() {
            if suc.function(name).is_none() {
                out.push(format!("policy assigns unknown function `{name}`"));
            }
        }
        for f in &suc.functions {
            for k in &f.knobs {
                match self.get(&f.name, k.kind) {
                    Some(v) if !k.domain.contains(v) => out.push(format!(
                        "value {v} for {} of `{}` is outside its domain",
                        k.kind, f.name
                    )),
                    None if !k.quality_neutral => {
                        out.push(format!("no value for {} of `{}`", k.kind, f.name))
                    }
                    _ => {}
                }
            }
        }
        out
    }

    pub fn validate(&self, suc: &SystemUnderConfiguration) -> Result<()> {
        let v = self.violations(suc);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }

    pub fn fingerprint(&self) -> String {
        crate::json::fingerprint(self)
    }
}

fn knob_domains(suc: &SystemUnderConfiguration, knob: KnobKind) -> Result<Vec<&Domain>> {
    suc.functions
        .iter()
        .map(|f| {
            f.knob(knob)
                .map(|k| &k.domain)
                .ok_or_else(|| Error::UnknownKnob(format!("{knob} on function `{}`", f.name)))
        })
        .collect()
}

/// Product of the knob's domain sizes over all functions.
pub fn config_space_size(suc: &SystemUnderConfiguration, knob: KnobKind) -> Result<u128> {
    knob_domains(suc, knob)?
        .iter()
        .try_fold(1u128, |acc, d| acc.checked_mul(d.len() as u128))
        .ok_or_else(|| Error::Invalid("configuration space size overflows u128".into()))
}

/// Iterates every value combination of one knob, first function most significant.
#[derive(Debug, Clone)]
pub struct PolicyIter<'a> {
    suc: &'a SystemUnderConfiguration,
    knob: KnobKind,
    domains: Vec<&'a Domain>,
    base: Policy,
    cursor: Option<Vec<usize>>,
}

impl Iterator for PolicyIter<'_> {
    type Item = Policy;

    fn next(&mut self) -> Option<Policy> {
        let idx = self.cursor.as_mut()?;
        let mut p = self.base.clone();
        for (i, f) in self.suc.functions.iter().enumerate() {
            p.set(&f.name, self.knob, self.domains[i].get(idx[i]));
        }
        // odometer, last function fastest
        let mut pos = idx.len();
        loop {
            if pos == 0 {
                self.cursor = None;
                break;
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < self.domains[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
        Some(p)
    }
}

/// All policies over `knob`, in lexicographic (function order, domain order).
///
/// Knobs other than `knob` stay at their baseline value.
pub fn enumerate_policies(
    suc: &SystemUnderConfiguration,
    knob: KnobKind,
    cap: u128,
) -> Result<PolicyIter<'_>> {
    let size = config_space_size(suc, knob)?;
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let domains = knob_domains(suc, knob)?;
    let cursor = (size > 0).then(|| vec![0; domains.len()]);
    Ok(PolicyIter {
        suc,
        knob,
        domains,
        base: Policy::baseline(suc),
        cursor,
    })
}
