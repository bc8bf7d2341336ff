//! The sizing pipeline: obtain a model per function and workload class
//! (from the store or by sampling and fitting), then search the joint space.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{
    execute_plan, monotonic_prune_sweep, plan_max_spacing, skip_constant_knobs_suc,
    ExperimentOptions, ExperimentReport, SamplingMode, SamplingPlan, TacticConfig, DEFAULT_N_SIZES,
    DEFAULT_RUNS_PER_SIZE,
};
use crate::goal::{validate_goal, GoalSpec};
use crate::modeling::{
    build_model_or_table, get_or_build_model, model_hash, ModelContext, ModelKey, ModelRequest,
    ModelStore, Provenance, QualityModel, DEFAULT_STALENESS, POOLED_CLASS,
};
use crate::platform::Platform;
use crate::policy::{Policy, DEFAULT_ENUMERATION_CAP};
use crate::quality::QualityKind;
use crate::suc::{Domain, SystemUnderConfiguration};
use crate::workload::WorkloadModel;

use super::result::SizingResult;
use super::samples::match_samples;
use super::search::{anneal_match, brute_force_match, AnnealSchedule};
use super::space::SearchSpace;

/// Virtual cost of fitting one model (ms).
pub const FIT_COST_MS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchChoice {
    /// Exhaustive when the space fits under the cap, annealing otherwise.
    #[default]
    Auto,
    BruteForce,
    Anneal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SizingOptions {
    pub n_sizes: usize,
    pub runs_per_size: u32,
    pub search: SearchChoice,
    pub enumeration_cap: u64,
    pub schedule: AnnealSchedule,
    pub seed: u64,
    /// Maximum model age before a rebuild (virtual ms).
    pub staleness: u64,
    pub experiment: ExperimentOptions,
}

impl Default for SizingOptions {
    fn default() -> Self {
        SizingOptions {
            n_sizes: DEFAULT_N_SIZES,
            runs_per_size: DEFAULT_RUNS_PER_SIZE,
            search: SearchChoice::Auto,
            enumeration_cap: DEFAULT_ENUMERATION_CAP as u64,
            schedule: AnnealSchedule::default(),
            seed: 0,
            staleness: DEFAULT_STALENESS,
            experiment: ExperimentOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SizingRequest {
    /// Target SUC; when absent the caller's registered SUC is used.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub suc: Option<SystemUnderConfiguration>,
    /// Explicit model references (store keys) used instead of sampling.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub models: Vec<String>,
    pub goal: GoalSpec,
    pub workload: WorkloadModel,
    #[serde(default)]
    pub tactics: TacticConfig,
    #[serde(default)]
    pub apply: bool,
    #[serde(default)]
    pub options: SizingOptions,
}

impl SizingRequest {
    pub fn new(suc: SystemUnderConfiguration, goal: GoalSpec, workload: WorkloadModel) -> Self {
        SizingRequest {
            suc: Some(suc),
            models: Vec::new(),
            goal,
            workload,
            tactics: TacticConfig::default(),
            apply: false,
            options: SizingOptions::default(),
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = validate_goal(&self.goal).violations;
        out.extend(self.workload.violations());
        out.extend(self.tactics.violations());
        if let Some(suc) = &self.suc {
            out.extend(suc.violations());
        }
        if let Err(Error::Validation(v)) = self.options.schedule.validate() {
            out.extend(v);
        }
        if self.options.runs_per_size == 0 {
            out.push("runs_per_size must be at least 1".into());
        }
        if self.options.n_sizes < 2 {
            out.push("n_sizes must be at least 2".into());
        }
        if !self.models.is_empty() {
            if self.tactics.reuse_model.is_none() {
                out.push("model references require tactics.reuse_model".into());
            } else if self.suc.is_some() {
                out.push("name either a SUC or model references, not both".into());
            }
        }
        if self.goal.weights.contains_key(&QualityKind::Throughput)
            || self
                .goal
                .bounds
                .iter()
                .any(|b| b.quality == QualityKind::Throughput)
        {
            out.push("Throughput is not modeled and cannot be weighted or bounded".into());
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
}

/// Virtual time per configuration task (ms).
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskTimes {
    pub sample: f64,
    pub model: f64,
    #[serde(rename = "match")]
    pub matching: f64,
}

impl TaskTimes {
    pub fn total(&self) -> f64 {
        self.sample + self.model + self.matching
    }
}

/// A sizing result plus every artifact needed to evaluate the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizingRun {
    pub result: SizingResult,
    pub experiments: Vec<ExperimentReport>,
    pub tasks: TaskTimes,
    pub invocations: u64,
    pub sampling_cost: f64,
    pub started_at: u64,
}

fn sample_sizes(domain: &Domain, n: usize) -> Result<Vec<u32>> {
    if domain.len() < 2 {
        return Ok(domain.iter().collect());
    }
    plan_max_spacing(domain, n.min(domain.len()))
}

struct Pipeline<'a> {
    request: &'a SizingRequest,
    suc: &'a SystemUnderConfiguration,
    experiments: Vec<ExperimentReport>,
    warnings: Vec<String>,
    fits: u32,
}

impl Pipeline<'_> {
    fn experiment_options(&self) -> ExperimentOptions {
        ExperimentOptions {
            seed: self.request.options.seed,
            ..self.request.options.experiment
        }
    }

    fn sample(
        &mut self,
        platform: &mut dyn Platform,
        plan: &SamplingPlan,
    ) -> Result<ExperimentReport> {
        let t = &self.request.tactics;
        let opts = self.experiment_options();
        let report = match &t.monotonic_prune {
            Some(bound) if plan.mode == SamplingMode::Sequential => {
                monotonic_prune_sweep(
                    platform,
                    self.suc,
                    plan,
                    bound,
                    t,
                    &self.request.workload,
                    &opts,
                )?
                .report
            }
            _ => execute_plan(platform, self.suc, plan, t, &self.request.workload, &opts)?,
        };
        self.experiments.push(report.clone());
        Ok(report)
    }

    fn build(
        &mut self,
        platform: &mut dyn Platform,
        function: &str,
        class: &str,
        suc_hash: &str,
    ) -> Result<QualityModel> {
        let t = &self.request.tactics;
        let spec = self
            .suc
            .function(function)
            .ok_or_else(|| Error::UnknownFunction(function.into()))?;
        let plan = SamplingPlan {
            function: function.into(),
            sizes: sample_sizes(spec.memory_domain(), self.request.options.n_sizes)?,
            runs_per_size: self.request.options.runs_per_size,
            workload_classes: if class == POOLED_CLASS {
                Vec::new()
            } else {
                vec![class.into()]
            },
            mode: if t.manifold_testbeds {
                SamplingMode::Manifold
            } else {
                SamplingMode::Sequential
            },
            end_to_end: false,
        };
        let mut samples = self.sample(platform, &plan)?.samples;
        if class == POOLED_CLASS {
            for s in &mut samples {
                s.workload_class = POOLED_CLASS.into();
            }
        }
        self.fits += 1;
        let ctx = ModelContext {
            function: function.into(),
            workload_class: class.into(),
            function_type: t.assume_function_type,
            cost_params: platform.cost_params(),
            client_overhead: platform.client_overhead(),
            created_at: platform.now(),
            suc_hash: suc_hash.into(),
        };
        let (model, warning) = build_model_or_table(&ctx, &samples)?;
        self.warnings.extend(warning);
        Ok(model)
    }
}

/// Runs the whole pipeline for one request against `platform`.
pub fn run_sizing(
    request: &SizingRequest,
    suc: &SystemUnderConfiguration,
    platform: &mut dyn Platform,
    store: &ModelStore,
) -> Result<SizingRun> {
    request.validate()?;
    suc.validate()?;
    let started_at = platform.now();
    let first_record = platform.telemetry().len();
    let tactics = &request.tactics;
    let class_weights: BTreeMap<String, f64> = request
        .workload
        .classes
        .iter()
        .map(|c| (c.id.clone(), c.relative_frequency))
        .collect();
    let (fixed, _) = skip_constant_knobs_suc(suc, tactics)?;
    let mut base = Policy::baseline(suc);
    for (f, knobs) in &fixed {
        for (&k, &v) in knobs {
            base.set(f, k, v);
        }
    }

    let mut pipe = Pipeline {
        request,
        suc,
        experiments: Vec::new(),
        warnings: Vec::new(),
        fits: 0,
    };

    let mut result = if !tactics.decompose_composition {
        if tactics.reuse_model.is_some() {
            pipe.warnings
                .push("reuse_model ignored: end-to-end sizing keeps no per-function models".into());
        }
        let first = suc
            .functions
            .first()
            .ok_or_else(|| Error::Invalid("SUC has no functions".into()))?;
        let plan = SamplingPlan {
            function: suc.name.clone(),
            sizes: sample_sizes(first.memory_domain(), request.options.n_sizes)?,
            runs_per_size: request.options.runs_per_size,
            workload_classes: Vec::new(),
            mode: if tactics.manifold_testbeds {
                SamplingMode::Manifold
            } else {
                SamplingMode::Sequential
            },
            end_to_end: true,
        };
        let report = pipe.sample(platform, &plan)?;
        match_samples(&report.samples, &request.goal, &class_weights)?
    } else {
        let classes: Vec<(String, f64)> = if tactics.workload_classes_known {
            request
                .workload
                .classes
                .iter()
                .map(|c| (c.id.clone(), c.relative_frequency))
                .collect()
        } else {
            vec![(POOLED_CLASS.to_string(), 1.0)]
        };
        let mut models: BTreeMap<(String, String), QualityModel> = BTreeMap::new();
        let mut model_keys = Vec::new();
        let mut model_provenance = BTreeMap::new();
        let explicit: Vec<QualityModel> = request
            .models
            .iter()
            .map(|r| store.find(r))
            .collect::<Result<_>>()?;
        for f in &suc.functions {
            let digest = platform.code_digest(&f.name)?;
            for (class, _) in &classes {
                let suc_hash = model_hash(f, &digest, class);
                let outcome = if !request.models.is_empty() {
                    let model = explicit
                        .iter()
                        .find(|m| m.function == f.name && m.workload_class == *class)
                        .cloned()
                        .ok_or_else(|| Error::ModelNotFound(format!("{}/{class}", f.name)))?;
                    let mut warnings = Vec::new();
                    if model.suc_hash != suc_hash {
                        warnings.push(format!(
                            "stale: model of `{}` was built for a different function version",
                            f.name
                        ));
                    }
                    crate::modeling::ModelOutcome {
                        model,
                        provenance: Provenance::Cached,
                        warnings,
                    }
                } else {
                    let req = ModelRequest {
                        suc_hash: suc_hash.clone(),
                        function: f.name.clone(),
                        workload_class: class.clone(),
                        now: platform.now(),
                    };
                    get_or_build_model(&req, store, tactics, request.options.staleness, || {
                        pipe.build(platform, &f.name, class, &suc_hash)
                    })?
                };
                pipe.warnings.extend(outcome.warnings);
                let key = format!("{}/{}", f.name, class);
                model_keys.push(ModelKey::of(&outcome.model).file_name());
                model_provenance.insert(key, outcome.provenance);
                models.insert((f.name.clone(), class.clone()), outcome.model);
            }
        }

        let sizes: Vec<Vec<u32>> = suc
            .functions
            .iter()
            .map(|f| {
                let domain = f.memory_domain();
                let mut common: Option<Vec<u32>> = None;
                for (class, _) in &classes {
                    let s = models[&(f.name.clone(), class.clone())].supported_sizes(domain);
                    common = Some(match common {
                        None => s,
                        Some(c) => c.into_iter().filter(|m| s.contains(m)).collect(),
                    });
                }
                common.unwrap_or_default()
            })
            .collect();
        let predicted = [
            QualityKind::ELat,
            QualityKind::ECost,
            QualityKind::Reliability,
        ];
        let space = SearchSpace::new(
            suc,
            sizes,
            classes.clone(),
            platform.client_overhead(),
            base,
            |f, c, m| models[&(f.to_string(), c.to_string())].predict(m, &predicted),
        )?;
        let cap = request.options.enumeration_cap as u128;
        let brute = match request.options.search {
            SearchChoice::Auto => space.size() <= cap,
            SearchChoice::BruteForce => true,
            SearchChoice::Anneal => false,
        };
        let mut result = if brute {
            brute_force_match(&space, &request.goal, cap)?
        } else {
            anneal_match(
                &space,
                &request.goal,
                &request.options.schedule,
                request.options.seed,
            )?
        };
        result.provenance.model_keys = model_keys;
        result.provenance.model_provenance = model_provenance;
        result
    };

    let records = &platform.telemetry()[first_record..];
    let invocations = records.len() as u64;
    let sampling_cost = pipe
        .experiments
        .iter()
        .fold(0.0, |acc, e| acc + e.billed_cost);
    let tasks = TaskTimes {
        sample: pipe
            .experiments
            .iter()
            .fold(0.0, |acc, e| acc + e.elapsed as f64),
        model: pipe.fits as f64 * FIT_COST_MS,
        matching: result.search_stats.elapsed,
    };
    result.provenance.tactics = tactics.clone();
    result.provenance.warnings = pipe.warnings;
    if request.apply {
        let at = platform.now();
        let d = platform.deploy(&result.policy, at)?;
        result.provenance.applied_deployment = Some(d.id);
    }
    Ok(SizingRun {
        result,
        experiments: pipe.experiments,
        tasks,
        invocations,
        sampling_cost,
        started_at,
    })
}
