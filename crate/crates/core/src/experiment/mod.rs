//! Experiment planning and execution: which sizes to sample, and running
//! them against a platform one at a time or as overlapping testbeds.

mod executor;
mod tactics;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use executor::{
    execute_plan, monotonic_prune_sweep, per_size_means, size_aggregate, PruneOutcome,
};
pub use tactics::{FunctionType, Tactic, TacticConfig};

use crate::error::{Error, Result};
use crate::platform::Platform;
use crate::policy::Policy;
use crate::sample::Sample;
use crate::suc::{Domain, FunctionSpec, KnobKind, SystemUnderConfiguration};
use crate::workload::{FilterFlags, WorkloadModel};

pub const DEFAULT_RUNS_PER_SIZE: u32 = 20;
pub const DEFAULT_RUN_BLOCK_MS: u64 = 30_000;
pub const DEFAULT_N_SIZES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum SamplingMode {
    #[default]
    Sequential,
    Manifold,
}

fn default_runs() -> u32 {
    DEFAULT_RUNS_PER_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingPlan {
    /// Function to sample. Ignored for end-to-end plans.
    pub function: String,
    pub sizes: Vec<u32>,
    #[serde(default = "default_runs")]
    pub runs_per_size: u32,
    /// Classes to sample; empty means every class of the workload.
    #[serde(default)]
    pub workload_classes: Vec<String>,
    #[serde(default)]
    pub mode: SamplingMode,
    /// Run the whole composition with every function at (the nearest domain
    /// member to) the same size.
    #[serde(default)]
    pub end_to_end: bool,
}

impl SamplingPlan {
    pub fn new(function: impl Into<String>, sizes: Vec<u32>) -> Self {
        SamplingPlan {
            function: function.into(),
            sizes,
            runs_per_size: DEFAULT_RUNS_PER_SIZE,
            workload_classes: Vec::new(),
            mode: SamplingMode::Sequential,
            end_to_end: false,
        }
    }

    pub fn with_mode(mut self, mode: SamplingMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_runs(mut self, runs: u32) -> Self {
        self.runs_per_size = runs;
        self
    }

    pub fn violations(&self, suc: &SystemUnderConfiguration) -> Vec<String> {
        let mut out = Vec::new();
        if self.runs_per_size == 0 {
            out.push("runs_per_size must be at least 1".into());
        }
        if self.sizes.is_empty() {
            out.push("plan has no sizes".into());
        }
        if self.sizes.windows(2).any(|w| w[0] >= w[1]) {
            out.push("sizes must be strictly increasing".into());
        }
        if self.end_to_end {
            return out;
        }
        match suc.function(&self.function) {
            None => out.push(format!("unknown function `{}`", self.function)),
            Some(f) => {
                let d = f.memory_domain();
                for s in self.sizes.iter().filter(|&&s| !d.contains(s)) {
                    out.push(format!(
                        "size {s} is outside the memory domain of `{}`",
                        f.name
                    ));
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

    /// Policy deployed to sample `size`.
    pub fn policy_for(
        &self,
        suc: &SystemUnderConfiguration,
        tactics: &TacticConfig,
        size: u32,
    ) -> Policy {
        let mut p = Policy::baseline(suc);
        for f in &suc.functions {
            for k in &f.knobs {
                if tactics.constant_quality_knobs.contains(&k.kind) {
                    p.set(&f.name, k.kind, k.domain.first());
                }
            }
            if self.end_to_end {
                let d = f.memory_domain();
                p.set(
                    &f.name,
                    KnobKind::Memory,
                    d.get(d.nearest_index(size as f64)),
                );
            }
        }
        if !self.end_to_end {
            p.set(&self.function, KnobKind::Memory, size);
        }
        p
    }
}

/// Picks `n` members of `domain` closest to `n` evenly spaced positions
/// between its endpoints. Ties go to the smaller member.
pub fn plan_max_spacing(domain: &Domain, n: usize) -> Result<Vec<u32>> {
    if n < 2 {
        return Err(Error::Invalid(format!(
            "n_sizes must be at least 2, got {n}"
        )));
    }
    let len = domain.len();
    if n > len {
        return Err(Error::Invalid(format!(
            "n_sizes {n} exceeds the domain cardinality {len}"
        )));
    }
    if n == len {
        return Ok(domain.iter().collect());
    }
    let lo = domain.first() as f64;
    let hi = domain.last() as f64;
    let mut out: Vec<u32> = Vec::with_capacity(n);
    for k in 0..n {
        let pos = lo + (hi - lo) * k as f64 / (n - 1) as f64;
        let v = domain.get(domain.nearest_index(pos));
        if out.last() != Some(&v) {
            out.push(v);
        }
    }
    Ok(out)
}

/// Tunables of the executor. None of these come from the method itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentOptions {
    /// Virtual duration of the run block per size (ms).
    pub run_block: u64,
    /// Fraction of runs kept when executions are isolated (T1).
    pub isolation_discount: f64,
    pub isolation_floor: u32,
    /// Throttled fraction above which a manifold experiment aborts.
    pub throttle_abort_threshold: f64,
    /// Delay per deployment when operations are not automated (ms).
    pub manual_ops_delay: u64,
    pub filter: FilterFlags,
    /// Seed for event draws when workload classes are not known up front.
    pub seed: u64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            run_block: DEFAULT_RUN_BLOCK_MS,
            isolation_discount: 0.5,
            isolation_floor: 3,
            throttle_abort_threshold: 0.05,
            manual_ops_delay: 300_000,
            filter: FilterFlags::default(),
            seed: 0,
        }
    }
}

impl ExperimentOptions {
    pub fn effective_runs(&self, runs: u32, tactics: &TacticConfig) -> u32 {
        if !tactics.isolate_executions {
            return runs;
        }
        let reduced = (runs as f64 * self.isolation_discount).floor() as u32;
        reduced.max(self.isolation_floor).min(runs)
    }
}

/// Virtual timing of one sampled size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizeTiming {
    pub size: u32,
    pub deployed_at: u64,
    pub ready_at: u64,
    pub finished_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub plan: SamplingPlan,
    pub tactics: TacticConfig,
    pub applied_tactics: Vec<Tactic>,
    pub runs_per_size: u32,
    /// Knobs held at a fixed value instead of being searched.
    pub fixed_knobs: BTreeMap<String, BTreeMap<KnobKind, u32>>,
    pub samples: Vec<Sample>,
    pub omitted_sizes: Vec<u32>,
    pub timings: Vec<SizeTiming>,
    pub started_at: u64,
    pub finished_at: u64,
    pub elapsed: u64,
    pub invocations: u64,
    pub throttled: u64,
    pub billed_cost: f64,
}

/// A plan with everything needed to run it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentRequest {
    pub plan: SamplingPlan,
    #[serde(default)]
    pub tactics: TacticConfig,
    pub workload: WorkloadModel,
    #[serde(default)]
    pub options: ExperimentOptions,
}

impl ExperimentRequest {
    pub fn violations(&self, suc: &SystemUnderConfiguration) -> Vec<String> {
        let mut v = self.plan.violations(suc);
        v.extend(self.tactics.violations());
        v.extend(self.workload.violations());
        v
    }

    /// Runs the plan, as a pruned sweep when T5 is on and the plan allows it.
    pub fn run(
        &self,
        platform: &mut dyn Platform,
        suc: &SystemUnderConfiguration,
    ) -> Result<ExperimentReport> {
        let v = self.violations(suc);
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        match &self.tactics.monotonic_prune {
            Some(bound) if self.plan.mode == SamplingMode::Sequential && !self.plan.end_to_end => {
                Ok(monotonic_prune_sweep(
                    platform,
                    suc,
                    &self.plan,
                    bound,
                    &self.tactics,
                    &self.workload,
                    &self.options,
                )?
                .report)
            }
            _ => execute_plan(
                platform,
                suc,
                &self.plan,
                &self.tactics,
                &self.workload,
                &self.options,
            ),
        }
    }
}

/// Search dimensions left for one function after removing constant knobs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EffectiveSpace {
    pub search: Vec<KnobKind>,
    pub fixed: BTreeMap<KnobKind, u32>,
    /// Factor by which the configuration space shrank.
    pub reduction_factor: u128,
}

pub fn skip_constant_knobs(
    function: &FunctionSpec,
    tactics: &TacticConfig,
) -> Result<EffectiveSpace> {
    if tactics.constant_quality_knobs.contains(&KnobKind::Memory) {
        return Err(Error::Validation(vec![
            "the memory knob is the optimization target and cannot be constant".into(),
        ]));
    }
    let mut space = EffectiveSpace {
        search: Vec::new(),
        fixed: BTreeMap::new(),
        reduction_factor: 1,
    };
    for k in &function.knobs {
        if tactics.constant_quality_knobs.contains(&k.kind) {
            space.fixed.insert(k.kind, k.domain.first());
            space.reduction_factor *= k.domain.len() as u128;
        } else {
            space.search.push(k.kind);
        }
    }
    Ok(space)
}

/// Fixed knobs per function, plus the overall reduction factor.
pub fn skip_constant_knobs_suc(
    suc: &SystemUnderConfiguration,
    tactics: &TacticConfig,
) -> Result<(BTreeMap<String, BTreeMap<KnobKind, u32>>, u128)> {
    let mut fixed = BTreeMap::new();
    let mut factor = 1u128;
    for f in &suc.functions {
        let space = skip_constant_knobs(f, tactics)?;
        factor = factor.saturating_mul(space.reduction_factor);
        if !space.fixed.is_empty() {
            fixed.insert(f.name.clone(), space.fixed);
        }
    }
    Ok((fixed, factor))
}
