use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::goal::Bound;
use crate::platform::{Deployment, Platform};
use crate::policy::Policy;
use crate::quality::{Qualities, QualityKind};
use crate::sample::{Sample, TelemetryRecord};
use crate::suc::SystemUnderConfiguration;
use crate::workload::{generate_events, validate_and_filter, Event, WorkloadModel};

use super::{
    skip_constant_knobs_suc, ExperimentOptions, ExperimentReport, SamplingMode, SamplingPlan,
    SizeTiming, TacticConfig,
};

struct Ctx<'a> {
    suc: &'a SystemUnderConfiguration,
    plan: &'a SamplingPlan,
    tactics: &'a TacticConfig,
    options: &'a ExperimentOptions,
    events: Vec<Event>,
}

struct Testbed {
    size: u32,
    policy: Policy,
    deployment: Deployment,
    ready_at: u64,
}

impl Ctx<'_> {
    fn offset(&self, i: usize) -> u64 {
        i as u64 * self.options.run_block / self.events.len() as u64
    }

    fn deploy(&self, platform: &mut dyn Platform, size: u32, at: u64) -> Result<Testbed> {
        let policy = self.plan.policy_for(self.suc, self.tactics, size);
        let deployment = platform.deploy(&policy, at)?;
        let mut ready_at = deployment.converged_at;
        if !self.tactics.automate_ops {
            ready_at += self.options.manual_ops_delay;
        }
        Ok(Testbed {
            size,
            policy,
            deployment,
            ready_at,
        })
    }

    /// Issues event `i` against a testbed; returns the sample and its finish time.
    fn run(&self, platform: &mut dyn Platform, bed: &Testbed, i: usize) -> Result<(Sample, u64)> {
        let event = &self.events[i];
        let at = bed.ready_at + self.offset(i);
        let overhead = platform.client_overhead();
        let mut q = Qualities::new();
        if self.plan.end_to_end {
            let at = at.max(platform.now());
            let run = platform.invoke_composition(bed.deployment.id, event, at)?;
            let first = run
                .telemetry
                .first()
                .ok_or_else(|| Error::MissingTelemetry(format!("composition run at {at} ms")))?;
            let cost: f64 = run.telemetry.iter().map(|r| r.billed_cost).sum();
            let telemetry = TelemetryRecord {
                invocation: first.invocation,
                deployment: bed.deployment.id,
                function: self.suc.name.clone(),
                started_at: run.started_at,
                duration: run.latency,
                billed_duration: run.telemetry.iter().map(|r| r.billed_duration).sum(),
                memory_size: bed.size,
                cold_start: run.telemetry.iter().any(|r| r.cold_start),
                billed_cost: cost,
                throttled: run.throttled,
                failed: run.telemetry.iter().any(|r| r.failed),
            };
            q.insert(QualityKind::ECost, cost);
            q.insert(QualityKind::Reliability, if run.ok { 1.0 } else { 0.0 });
            if !run.throttled {
                q.insert(QualityKind::ELat, run.latency);
                q.insert(QualityKind::RLat, run.latency + overhead);
            }
            let sample = self.sample(bed, event, q, telemetry, at);
            return Ok((sample, run.finished_at));
        }
        let inv = platform.invoke(bed.deployment.id, &self.plan.function, event, at)?;
        let t = &inv.telemetry;
        q.insert(QualityKind::ECost, t.billed_cost);
        q.insert(
            QualityKind::Reliability,
            if inv.response.ok { 1.0 } else { 0.0 },
        );
        if !t.throttled {
            q.insert(QualityKind::ELat, t.duration);
            q.insert(QualityKind::RLat, inv.response.client_latency);
        }
        let finished = inv.response.finished_at;
        Ok((self.sample(bed, event, q, inv.telemetry, at), finished))
    }

    fn sample(
        &self,
        bed: &Testbed,
        event: &Event,
        qualities: Qualities,
        telemetry: TelemetryRecord,
        at: u64,
    ) -> Sample {
        let function = if self.plan.end_to_end {
            self.suc.name.clone()
        } else {
            self.plan.function.clone()
        };
        Sample {
            function,
            policy: bed.policy.clone(),
            workload_class: event.class_id.clone(),
            qualities,
            telemetry,
            valid: true,
            invalid_reason: None,
            virtual_timestamp: at,
        }
    }

    /// Deploys one size, runs its block, and tears it down.
    fn run_size(
        &self,
        platform: &mut dyn Platform,
        size: u32,
        at: u64,
    ) -> Result<(Vec<Sample>, SizeTiming)> {
        let bed = self.deploy(platform, size, at)?;
        let mut samples = Vec::with_capacity(self.events.len());
        let mut end = bed.ready_at + self.options.run_block;
        for i in 0..self.events.len() {
            let (s, finished) = self.run(platform, &bed, i)?;
            end = end.max(finished);
            samples.push(s);
        }
        platform.teardown(bed.deployment.id)?;
        platform.advance_to(end)?;
        let timing = SizeTiming {
            size,
            deployed_at: at,
            ready_at: bed.ready_at,
            finished_at: end,
        };
        Ok((samples, timing))
    }
}

fn build_events(
    plan: &SamplingPlan,
    tactics: &TacticConfig,
    workload: &WorkloadModel,
    runs: u32,
    seed: u64,
) -> Result<Vec<Event>> {
    if tactics.workload_classes_known {
        let classes = if plan.workload_classes.is_empty() {
            workload.class_ids()
        } else {
            plan.workload_classes.clone()
        };
        let mut events = Vec::with_capacity(classes.len() * runs as usize);
        for _ in 0..runs {
            for id in &classes {
                let class = workload
                    .class(id)
                    .ok_or_else(|| Error::UnknownWorkloadClass(id.clone()))?;
                events.push(Event {
                    class_id: class.id.clone(),
                    payload_descriptor: class.payload_descriptor.clone(),
                    issued_at: 0,
                });
            }
        }
        Ok(events)
    } else {
        // Classes unknown: replay the production mix as drawn.
        let n = runs as usize * workload.classes.len();
        Ok(generate_events(workload, n, seed))
    }
}

fn mark_invalid(samples: Vec<Sample>, options: &ExperimentOptions) -> Vec<Sample> {
    let outcome = validate_and_filter(&samples, options.filter);
    let mut invalid = outcome.invalidated.into_iter().peekable();
    let mut valid = outcome.valid.into_iter().peekable();
    // Both halves preserve input order; merge back by timestamp and invocation.
    let mut out = Vec::with_capacity(samples.len());
    loop {
        let take_valid = match (valid.peek(), invalid.peek()) {
            (Some(v), Some(i)) => {
                (v.virtual_timestamp, v.telemetry.invocation)
                    <= (i.virtual_timestamp, i.telemetry.invocation)
            }
            (Some(_), None) => true,
            (None, Some(_)) => false,
            (None, None) => break,
        };
        out.push(
            if take_valid {
                valid.next()
            } else {
                invalid.next()
            }
            .expect("peeked"),
        );
    }
    out
}

fn prepare<'a>(
    suc: &'a SystemUnderConfiguration,
    plan: &'a SamplingPlan,
    tactics: &'a TacticConfig,
    workload: &WorkloadModel,
    options: &'a ExperimentOptions,
) -> Result<(Ctx<'a>, u32)> {
    tactics.validate()?;
    plan.validate(suc)?;
    workload.validate()?;
    let runs = options.effective_runs(plan.runs_per_size, tactics);
    let events = build_events(plan, tactics, workload, runs, options.seed)?;
    Ok((
        Ctx {
            suc,
            plan,
            tactics,
            options,
            events,
        },
        runs,
    ))
}

#[allow(clippy::too_many_arguments)]
fn report(
    platform: &dyn Platform,
    ctx: &Ctx<'_>,
    runs: u32,
    first_record: usize,
    samples: Vec<Sample>,
    timings: Vec<SizeTiming>,
    omitted_sizes: Vec<u32>,
    started_at: u64,
) -> Result<ExperimentReport> {
    let records = &platform.telemetry()[first_record..];
    let finished_at = timings
        .iter()
        .map(|t| t.finished_at)
        .max()
        .unwrap_or(started_at);
    let (fixed_knobs, _) = skip_constant_knobs_suc(ctx.suc, ctx.tactics)?;
    Ok(ExperimentReport {
        plan: ctx.plan.clone(),
        tactics: ctx.tactics.clone(),
        applied_tactics: ctx.tactics.applied(),
        runs_per_size: runs,
        fixed_knobs,
        samples: mark_invalid(samples, ctx.options),
        omitted_sizes,
        timings,
        started_at,
        finished_at,
        elapsed: finished_at - started_at,
        invocations: records.len() as u64,
        throttled: records.iter().filter(|r| r.throttled).count() as u64,
        billed_cost: records.iter().fold(0.0, |acc, r| acc + r.billed_cost),
    })
}

/// Runs every size of the plan and returns the joined samples.
pub fn execute_plan(
    platform: &mut dyn Platform,
    suc: &SystemUnderConfiguration,
    plan: &SamplingPlan,
    tactics: &TacticConfig,
    workload: &WorkloadModel,
    options: &ExperimentOptions,
) -> Result<ExperimentReport> {
    let (ctx, runs) = prepare(suc, plan, tactics, workload, options)?;
    let first_record = platform.telemetry().len();
    let started_at = platform.now();
    let mut samples = Vec::new();
    let mut timings = Vec::new();

    match plan.mode {
        SamplingMode::Sequential => {
            let mut t = started_at;
            for &size in &plan.sizes {
                let (s, timing) = ctx.run_size(platform, size, t)?;
                t = timing.finished_at;
                samples.extend(s);
                timings.push(timing);
            }
        }
        SamplingMode::Manifold => {
            let beds = plan
                .sizes
                .iter()
                .map(|&size| ctx.deploy(platform, size, started_at))
                .collect::<Result<Vec<_>>>()?;
            let ctx_ref = &ctx;
            let mut schedule: Vec<(u64, usize, usize)> = beds
                .iter()
                .enumerate()
                .flat_map(|(b, bed)| {
                    (0..ctx_ref.events.len()).map(move |i| (bed.ready_at + ctx_ref.offset(i), b, i))
                })
                .collect();
            schedule.sort_unstable();
            let mut ends: Vec<u64> = beds
                .iter()
                .map(|b| b.ready_at + options.run_block)
                .collect();
            for (_, b, i) in schedule {
                let (s, finished) = ctx.run(platform, &beds[b], i)?;
                ends[b] = ends[b].max(finished);
                samples.push(s);
            }
            for (bed, end) in beds.iter().zip(&ends) {
                platform.teardown(bed.deployment.id)?;
                timings.push(SizeTiming {
                    size: bed.size,
                    deployed_at: started_at,
                    ready_at: bed.ready_at,
                    finished_at: *end,
                });
            }
            let finished = ends.iter().copied().max().unwrap_or(started_at);
            platform.advance_to(finished)?;

            let records = &platform.telemetry()[first_record..];
            let throttled = records.iter().filter(|r| r.throttled).count();
            let total = records.len();
            let rate = if total == 0 {
                0.0
            } else {
                throttled as f64 / total as f64
            };
            if rate > options.throttle_abort_threshold {
                log::warn!("manifold experiment aborted: {throttled}/{total} requests throttled");
                return Err(Error::ThrottleLimit {
                    throttled,
                    total,
                    rate,
                    threshold: options.throttle_abort_threshold,
                    limit: platform.max_concurrent_executions(),
                });
            }
        }
    }
    report(
        platform,
        &ctx,
        runs,
        first_record,
        samples,
        timings,
        Vec::new(),
        started_at,
    )
}

/// Mean of a quality over one size's samples: reliability over all samples,
/// everything else over valid samples only.
pub fn size_aggregate(samples: &[Sample], size: u32, quality: QualityKind) -> Result<f64> {
    let at_size = samples.iter().filter(|s| s.memory_size() == size);
    let values: Vec<f64> = if quality == QualityKind::Reliability {
        at_size.filter_map(|s| s.quality(quality)).collect()
    } else {
        at_size
            .filter(|s| s.valid)
            .filter_map(|s| s.quality(quality))
            .collect()
    };
    if values.is_empty() {
        return Err(Error::UnmeasuredQuality(quality));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub report: ExperimentReport,
    /// Sizes in the order they were visited.
    pub visited: Vec<u32>,
    pub omitted: Vec<u32>,
}

/// Sweeps sizes from the side where `bound.quality` is best and stops after
/// the first size whose aggregate violates the bound.
pub fn monotonic_prune_sweep(
    platform: &mut dyn Platform,
    suc: &SystemUnderConfiguration,
    plan: &SamplingPlan,
    bound: &Bound,
    tactics: &TacticConfig,
    workload: &WorkloadModel,
    options: &ExperimentOptions,
) -> Result<PruneOutcome> {
    if plan.mode != SamplingMode::Sequential {
        return Err(Error::Validation(vec![
            "monotonic pruning requires a sequential plan".into(),
        ]));
    }
    if bound.quality == QualityKind::Throughput {
        return Err(Error::UnmeasuredQuality(bound.quality));
    }
    let tactics = TacticConfig {
        monotonic_prune: Some(*bound),
        manifold_testbeds: false,
        ..tactics.clone()
    };
    let (ctx, runs) = prepare(suc, plan, &tactics, workload, options)?;
    let first_record = platform.telemetry().len();
    let started_at = platform.now();

    // Cost grows with size; everything else improves with it.
    let mut order = plan.sizes.clone();
    if bound.quality != QualityKind::ECost {
        order.reverse();
    }
    let mut samples = Vec::new();
    let mut timings = Vec::new();
    let mut visited = Vec::new();
    let mut omitted = Vec::new();
    let mut t = started_at;
    for (k, &size) in order.iter().enumerate() {
        let (s, timing) = ctx.run_size(platform, size, t)?;
        t = timing.finished_at;
        let s = mark_invalid(s, options);
        let value = size_aggregate(&s, size, bound.quality)?;
        samples.extend(s);
        timings.push(timing);
        visited.push(size);
        if !bound.holds(value) {
            omitted = order[k + 1..].to_vec();
            omitted.sort_unstable();
            break;
        }
    }
    let report = report(
        platform,
        &ctx,
        runs,
        first_record,
        samples,
        timings,
        omitted.clone(),
        started_at,
    )?;
    Ok(PruneOutcome {
        report,
        visited,
        omitted,
    })
}

/// Per-size mean qualities of a sample set, keyed by memory size.
pub fn per_size_means(samples: &[Sample]) -> BTreeMap<u32, Qualities> {
    let mut sizes: Vec<u32> = samples.iter().map(|s| s.memory_size()).collect();
    sizes.sort_unstable();
    sizes.dedup();
    let mut out = BTreeMap::new();
    for size in sizes {
        let mut q = Qualities::new();
        for kind in QualityKind::ALL {
            if let Ok(v) = size_aggregate(samples, size, kind) {
                q.insert(kind, v);
            }
        }
        out.insert(size, q);
    }
    out
}
