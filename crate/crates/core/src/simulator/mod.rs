//! Deterministic virtual-time FaaS platform.
//!
//! Execution latency follows a per-function decay curve over memory size with
//! log-normal noise. Slots stay warm for `keep_alive` after their last
//! execution; a request that finds no warm slot with spare capacity pays the
//! cold-start penalty. All randomness is keyed on the seed, the deployed
//! policy and a per-deployment invocation counter, so a replayed invocation
//! sequence yields bit-identical telemetry and two modes that issue the same
//! per-deployment streams in different interleavings observe the same values.

mod config;
mod oracle;

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub use config::{ConvergenceRange, GroundTruth, GroundTruthEntry, PlatformConfig};

use crate::error::{Error, Result};
use crate::platform::{
    CompositionRun, CostParams, Deployment, DeploymentId, Invocation, Platform, Response,
};
use crate::policy::Policy;
use crate::sample::{billed_cost, billed_duration, TelemetryRecord};
use crate::suc::{CompositionNode, SystemUnderConfiguration};
use crate::workload::Event;

const TAG_DEPLOY: u64 = 0x6465_706c_6f79;
const TAG_COMPOSITION: u64 = 0x636f_6d70;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn mix(a: u64, b: u64) -> u64 {
    splitmix64(a ^ splitmix64(b))
}

fn rng_for(key: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(key)
}

#[derive(Debug, Clone)]
struct Slot {
    /// Time the slot last became idle.
    last_used: u64,
    running: Vec<u64>,
}

#[derive(Debug, Clone)]
struct DeploymentState {
    info: Deployment,
    stream_key: u64,
    counters: BTreeMap<String, u64>,
    compositions: u64,
    slots: BTreeMap<(String, u32), Vec<Slot>>,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    config: PlatformConfig,
    suc: SystemUnderConfiguration,
    truth: GroundTruth,
    clock: u64,
    next_deployment: DeploymentId,
    next_invocation: u64,
    policy_streams: BTreeMap<String, u64>,
    deployments: BTreeMap<DeploymentId, DeploymentState>,
    in_flight: BinaryHeap<Reverse<u64>>,
    telemetry: Vec<TelemetryRecord>,
}

impl Simulator {
    pub fn new(
        config: PlatformConfig,
        suc: SystemUnderConfiguration,
        truth: GroundTruth,
    ) -> Result<Self> {
        let mut v = config.violations();
        v.extend(suc.violations());
        v.extend(truth.violations());
        if !v.is_empty() {
            return Err(Error::Validation(v));
        }
        Ok(Simulator {
            config,
            suc,
            truth,
            clock: 0,
            next_deployment: 0,
            next_invocation: 0,
            policy_streams: BTreeMap::new(),
            deployments: BTreeMap::new(),
            in_flight: BinaryHeap::new(),
            telemetry: Vec::new(),
        })
    }

    pub fn config(&self) -> &PlatformConfig {
        &self.config
    }

    pub fn suc(&self) -> &SystemUnderConfiguration {
        &self.suc
    }

    pub fn ground_truth(&self) -> &GroundTruth {
        &self.truth
    }

    /// Replaces the hidden behaviour, as a code change would.
    pub fn set_ground_truth(&mut self, truth: GroundTruth) -> Result<()> {
        truth.validate()?;
        self.truth = truth;
        Ok(())
    }

    pub fn deployment(&self, id: DeploymentId) -> Option<&Deployment> {
        self.deployments.get(&id).map(|d| &d.info)
    }

    /// Slots of `function` kept warm at the current clock.
    pub fn warm_slots(&self, id: DeploymentId, function: &str) -> usize {
        let Some(d) = self.deployments.get(&id) else {
            return 0;
        };
        d.slots
            .iter()
            .filter(|((f, _), _)| f == function)
            .flat_map(|(_, s)| s)
            .filter(|s| !s.running.is_empty() || self.clock - s.last_used <= self.config.keep_alive)
            .count()
    }

    pub fn advance_to(&mut self, at: u64) -> Result<()> {
        if at < self.clock {
            return Err(Error::TimeTravel {
                requested: at,
                clock: self.clock,
            });
        }
        self.clock = at;
        Ok(())
    }

    pub fn write_telemetry_jsonl(&self, mut out: impl Write) -> Result<()> {
        for r in &self.telemetry {
            let line = serde_json::to_string(r)?;
            writeln!(out, "{line}").map_err(|e| Error::io("<telemetry>", e))?;
        }
        Ok(())
    }

    fn next_stream(&mut self, policy: &Policy) -> u64 {
        let fp = policy.fingerprint();
        let fp64 = u64::from_str_radix(&fp[..16], 16).expect("hex digest");
        let nth = self.policy_streams.entry(fp).or_insert(0);
        let key = mix(mix(self.config.rng_seed, fp64), *nth);
        *nth += 1;
        key
    }

    fn convergence_delay(&self, stream_key: u64) -> u64 {
        let r = self.config.deployment_convergence;
        if r.max == r.min {
            return r.min;
        }
        rng_for(mix(stream_key, TAG_DEPLOY)).random_range(r.min..=r.max)
    }

    fn check_policy(&self, policy: &Policy) -> Result<()> {
        if let Some(name) = policy
            .assignments
            .keys()
            .find(|n| self.suc.function(n).is_none())
        {
            return Err(Error::UnknownFunction(name.clone()));
        }
        policy.validate(&self.suc)
    }

    fn retire(&mut self, at: u64) {
        while let Some(Reverse(end)) = self.in_flight.peek() {
            if *end > at {
                break;
            }
            self.in_flight.pop();
        }
    }

    fn execute(
        &mut self,
        id: DeploymentId,
        function: &str,
        event: &Event,
        at: u64,
    ) -> Result<(Invocation, u64)> {
        self.advance_to(at)?;
        let fn_index = self
            .suc
            .function_index(function)
            .ok_or_else(|| Error::UnknownFunction(function.to_string()))?;
        let (memory, stream_key, counter) = {
            let dep = self
                .deployments
                .get_mut(&id)
                .ok_or(Error::UnknownDeployment(id))?;
            if at < dep.info.created_at {
                return Err(Error::Invalid(format!(
                    "invocation at {at} ms precedes deployment {id} created at {} ms",
                    dep.info.created_at
                )));
            }
            let policy = if at < dep.info.converged_at {
                dep.info.previous_policy.as_ref().ok_or(Error::NotReady {
                    id,
                    ready_at: dep.info.converged_at,
                })?
            } else {
                &dep.info.policy
            };
            let memory = policy
                .memory(function)
                .ok_or_else(|| Error::UnknownFunction(function.to_string()))?;
            let counter = dep.counters.entry(function.to_string()).or_insert(0);
            let c = *counter;
            *counter += 1;
            (memory, dep.stream_key, c)
        };
        let truth = self.truth.lookup(function, &event.class_id)?.clone();
        let invocation = self.next_invocation;
        self.next_invocation += 1;

        self.retire(at);
        if self.in_flight.len() >= self.config.max_concurrent_executions as usize {
            let telemetry = TelemetryRecord {
                invocation,
                deployment: id,
                function: function.to_string(),
                started_at: at,
                duration: 0.0,
                billed_duration: 0,
                memory_size: memory,
                cold_start: false,
                billed_cost: 0.0,
                throttled: true,
                failed: false,
            };
            self.telemetry.push(telemetry.clone());
            let response = Response {
                ok: false,
                client_latency: self.config.client_overhead,
                finished_at: at,
            };
            return Ok((
                Invocation {
                    response,
                    telemetry,
                },
                at,
            ));
        }

        let mut rng = rng_for(mix(mix(stream_key, fn_index as u64 + 1), counter));
        let z: f64 = rng.sample(StandardNormal);
        let u: f64 = rng.random();

        let keep_alive = self.config.keep_alive;
        let capacity = self.config.slot_concurrency as usize;
        let dep = self.deployments.get_mut(&id).expect("checked above");
        let pool = dep.slots.entry((function.to_string(), memory)).or_default();
        for s in pool.iter_mut() {
            s.running.retain(|&end| end > at);
        }
        pool.retain(|s| !s.running.is_empty() || at - s.last_used <= keep_alive);
        let (slot_index, cold_start) = match pool.iter().position(|s| s.running.len() < capacity) {
            Some(i) => (i, false),
            None => {
                pool.push(Slot {
                    last_used: at,
                    running: Vec::new(),
                });
                (pool.len() - 1, true)
            }
        };
        let colocated = pool[slot_index].running.len() as f64;

        let sigma = truth.noise_sigma * (1.0 + self.config.colocation_noise * colocated);
        let mut duration = truth.latency(memory) * (sigma * z).exp();
        if cold_start {
            duration += truth.cold_start_extra.eval(memory as f64);
        }
        let failed = memory < truth.m_required || u < truth.base_failure_rate;
        let end = at + duration.ceil() as u64;
        let slot = &mut pool[slot_index];
        slot.running.push(end);
        slot.last_used = slot.last_used.max(end);
        self.in_flight.push(Reverse(end));

        let billed = billed_duration(duration, self.config.billing_quantum);
        let telemetry = TelemetryRecord {
            invocation,
            deployment: id,
            function: function.to_string(),
            started_at: at,
            duration,
            billed_duration: billed,
            memory_size: memory,
            cold_start,
            billed_cost: billed_cost(
                memory,
                billed,
                self.config.price_per_gb_second,
                self.config.price_per_invocation,
            ),
            throttled: false,
            failed,
        };
        self.telemetry.push(telemetry.clone());
        let response = Response {
            ok: !failed,
            client_latency: duration + self.config.client_overhead,
            finished_at: end,
        };
        Ok((
            Invocation {
                response,
                telemetry,
            },
            end,
        ))
    }
}

enum Frame<'a> {
    Root,
    Sequence {
        children: &'a [CompositionNode],
        next: usize,
        parent: usize,
    },
    Parallel {
        remaining: usize,
        parent: usize,
    },
}

fn schedule<'a>(queue: &mut BinaryHeap<Scheduled<'a>>, seq: &mut u64, at: u64, action: Action<'a>) {
    queue.push(Scheduled {
        at,
        seq: *seq,
        action,
    });
    *seq += 1;
}

enum Action<'a> {
    Start(&'a CompositionNode, usize),
    Done(usize),
}

struct Scheduled<'a> {
    at: u64,
    seq: u64,
    action: Action<'a>,
}

impl PartialEq for Scheduled<'_> {
    fn eq(&self, other: &Self) -> bool {
        (self.at, self.seq) == (other.at, other.seq)
    }
}
impl Eq for Scheduled<'_> {}
impl PartialOrd for Scheduled<'_> {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled<'_> {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        // min-heap on (time, insertion order)
        (other.at, other.seq).cmp(&(self.at, self.seq))
    }
}

impl Platform for Simulator {
    fn advance_to(&mut self, at: u64) -> Result<()> {
        Simulator::advance_to(self, at)
    }

    fn now(&self) -> u64 {
        self.clock
    }

    fn cost_params(&self) -> CostParams {
        self.config.cost_params()
    }

    fn client_overhead(&self) -> f64 {
        self.config.client_overhead
    }

    fn max_concurrent_executions(&self) -> u32 {
        self.config.max_concurrent_executions
    }

    fn code_digest(&self, function: &str) -> Result<String> {
        if self.suc.function(function).is_none() {
            return Err(Error::UnknownFunction(function.to_string()));
        }
        let entries: Vec<_> = self
            .truth
            .entries
            .iter()
            .filter(|e| e.function == function)
            .collect();
        Ok(crate::json::fingerprint(&entries))
    }

    fn deploy(&mut self, policy: &Policy, at: u64) -> Result<Deployment> {
        self.check_policy(policy)?;
        self.advance_to(at)?;
        let stream_key = self.next_stream(policy);
        let id = self.next_deployment;
        self.next_deployment += 1;
        let info = Deployment {
            id,
            policy: policy.clone(),
            created_at: at,
            converged_at: at + self.convergence_delay(stream_key),
            previous_policy: None,
        };
        self.deployments.insert(
            id,
            DeploymentState {
                info: info.clone(),
                stream_key,
                counters: BTreeMap::new(),
                compositions: 0,
                slots: BTreeMap::new(),
            },
        );
        Ok(info)
    }

    fn update(&mut self, id: DeploymentId, policy: &Policy, at: u64) -> Result<Deployment> {
        self.check_policy(policy)?;
        if !self.deployments.contains_key(&id) {
            return Err(Error::UnknownDeployment(id));
        }
        self.advance_to(at)?;
        let stream_key = self.next_stream(policy);
        let delay = self.convergence_delay(stream_key);
        let dep = self.deployments.get_mut(&id).expect("checked above");
        let previous = if at < dep.info.converged_at {
            dep.info.previous_policy.clone()
        } else {
            Some(dep.info.policy.clone())
        };
        dep.info = Deployment {
            id,
            policy: policy.clone(),
            created_at: at,
            converged_at: at + delay,
            previous_policy: previous,
        };
        dep.stream_key = stream_key;
        dep.counters.clear();
        dep.compositions = 0;
        Ok(dep.info.clone())
    }

    fn teardown(&mut self, id: DeploymentId) -> Result<()> {
        self.deployments
            .remove(&id)
            .map(|_| ())
            .ok_or(Error::UnknownDeployment(id))
    }

    fn invoke(
        &mut self,
        deployment: DeploymentId,
        function: &str,
        event: &Event,
        at: u64,
    ) -> Result<Invocation> {
        self.execute(deployment, function, event, at)
            .map(|(inv, _)| inv)
    }

    fn invoke_composition(
        &mut self,
        deployment: DeploymentId,
        event: &Event,
        at: u64,
    ) -> Result<CompositionRun> {
        self.advance_to(at)?;
        let dep = self
            .deployments
            .get_mut(&deployment)
            .ok_or(Error::UnknownDeployment(deployment))?;
        let mut branch_rng = rng_for(mix(mix(dep.stream_key, TAG_COMPOSITION), dep.compositions));
        dep.compositions += 1;

        let root = self.suc.composition.root.clone();
        let mut frames = vec![Frame::Root];
        let mut queue = BinaryHeap::new();
        let mut seq = 0u64;
        schedule(&mut queue, &mut seq, at, Action::Start(&root, 0));

        let mut telemetry = Vec::new();
        let mut finished_at = at;
        while let Some(Scheduled { at: t, action, .. }) = queue.pop() {
            match action {
                Action::Start(node, parent) => match node {
                    CompositionNode::FunctionRef(name) => {
                        let (inv, end) = self.execute(deployment, name, event, t)?;
                        telemetry.push(inv.telemetry);
                        schedule(&mut queue, &mut seq, end, Action::Done(parent));
                    }
                    CompositionNode::Sequence(children) => {
                        frames.push(Frame::Sequence {
                            children,
                            next: 1,
                            parent,
                        });
                        schedule(
                            &mut queue,
                            &mut seq,
                            t,
                            Action::Start(&children[0], frames.len() - 1),
                        );
                    }
                    CompositionNode::Parallel(children) => {
                        frames.push(Frame::Parallel {
                            remaining: children.len(),
                            parent,
                        });
                        let frame = frames.len() - 1;
                        for child in children {
                            schedule(&mut queue, &mut seq, t, Action::Start(child, frame));
                        }
                    }
                    CompositionNode::Switch(branches) => {
                        let u: f64 = branch_rng.random();
                        let mut acc = 0.0;
                        let chosen = branches
                            .iter()
                            .find(|b| {
                                acc += b.probability;
                                u < acc
                            })
                            .unwrap_or_else(|| branches.last().expect("non-empty switch"));
                        schedule(
                            &mut queue,
                            &mut seq,
                            t,
                            Action::Start(&chosen.child, parent),
                        );
                    }
                },
                Action::Done(frame) => match &mut frames[frame] {
                    Frame::Root => finished_at = t,
                    Frame::Sequence {
                        children,
                        next,
                        parent,
                    } => {
                        let kids: &[CompositionNode] = children;
                        if *next < kids.len() {
                            let child = &kids[*next];
                            *next += 1;
                            schedule(&mut queue, &mut seq, t, Action::Start(child, frame));
                        } else {
                            let p = *parent;
                            schedule(&mut queue, &mut seq, t, Action::Done(p));
                        }
                    }
                    Frame::Parallel { remaining, parent } => {
                        *remaining -= 1;
                        if *remaining == 0 {
                            let p = *parent;
                            schedule(&mut queue, &mut seq, t, Action::Done(p));
                        }
                    }
                },
            }
        }
        self.advance_to(finished_at)?;
        let throttled = telemetry.iter().any(|r| r.throttled);
        let ok = telemetry.iter().all(|r| !r.throttled && !r.failed);
        Ok(CompositionRun {
            started_at: at,
            finished_at,
            latency: (finished_at - at) as f64,
            ok,
            throttled,
            telemetry,
        })
    }

    fn telemetry(&self) -> &[TelemetryRecord] {
        &self.telemetry
    }
}
