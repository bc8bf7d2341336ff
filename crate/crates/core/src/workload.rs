//! Client emulation: event generation per workload class and response
//! validation ahead of modeling.

use std::collections::BTreeMap;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::json::compact;
use crate::sample::{InvalidReason, Sample};
use crate::suc::SUM_TOLERANCE;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadClass {
    pub id: String,
    pub relative_frequency: f64,
    /// Opaque; the simulator keys ground truth on the class id.
    #[serde(default)]
    pub payload_descriptor: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum TargetRate {
    OpenLoop { requests_per_second: f64 },
    ClosedLoop { n_clients: u32 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadModel {
    pub classes: Vec<WorkloadClass>,
    pub target_rate: TargetRate,
}

impl WorkloadModel {
    /// One class named `id` at the given open-loop rate.
    pub fn single(id: impl Into<String>, requests_per_second: f64) -> Self {
        let id = id.into();
        WorkloadModel {
            classes: vec![WorkloadClass {
                payload_descriptor: id.clone(),
                id,
                relative_frequency: 1.0,
            }],
            target_rate: TargetRate::OpenLoop {
                requests_per_second,
            },
        }
    }

    pub fn class(&self, id: &str) -> Option<&WorkloadClass> {
        self.classes.iter().find(|c| c.id == id)
    }

    pub fn class_ids(&self) -> Vec<String> {
        self.classes.iter().map(|c| c.id.clone()).collect()
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.classes.is_empty() {
            out.push("workload has no classes".into());
        }
        let mut seen = std::collections::BTreeSet::new();
        for c in &self.classes {
            if !seen.insert(c.id.as_str()) {
                out.push(format!("duplicate workload class `{}`", c.id));
            }
            if !(c.relative_frequency > 0.0) {
                out.push(format!("class `{}` has non-positive frequency", c.id));
            }
        }
        let sum: f64 = self.classes.iter().map(|c| c.relative_frequency).sum();
        if !self.classes.is_empty() && (sum - 1.0).abs() > SUM_TOLERANCE {
            out.push(format!("class frequencies sum to {}", compact(sum)));
        }
        match self.target_rate {
            TargetRate::OpenLoop {
                requests_per_second,
            } if !(requests_per_second > 0.0) => out.push("open-loop rate must be positive".into()),
            TargetRate::ClosedLoop { n_clients: 0 } => {
                out.push("closed loop needs at least one client".into())
            }
            _ => {}
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

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Event {
    pub class_id: String,
    pub payload_descriptor: String,
    /// Virtual issue time relative to the start of the stream (ms). Closed-loop
    /// events carry 0; the executor issues them as clients become free.
    pub issued_at: u64,
}

impl Event {
    pub fn of_class(class_id: impl Into<String>) -> Self {
        let class_id = class_id.into();
        Event {
            payload_descriptor: class_id.clone(),
            class_id,
            issued_at: 0,
        }
    }
}

/// Draws `n` events from the class mix; deterministic for a given seed.
pub fn generate_events(model: &WorkloadModel, n: usize, seed: u64) -> Vec<Event> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights: Vec<f64> = model.classes.iter().map(|c| c.relative_frequency).collect();
    let pick = WeightedIndex::new(&weights).ok();
    (0..n)
        .map(|i| {
            let class = match &pick {
                Some(d) => &model.classes[d.sample(&mut rng)],
                None => &model.classes[0],
            };
            let issued_at = match model.target_rate {
                TargetRate::OpenLoop {
                    requests_per_second,
                } => (i as f64 * 1000.0 / requests_per_second).round() as u64,
                TargetRate::ClosedLoop { .. } => 0,
            };
            Event {
                class_id: class.id.clone(),
                payload_descriptor: class.payload_descriptor.clone(),
                issued_at,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterFlags {
    pub drop_cold_starts: bool,
    pub drop_throttled: bool,
    pub drop_failed_for_latency: bool,
}

impl Default for FilterFlags {
    fn default() -> Self {
        FilterFlags {
            drop_cold_starts: true,
            drop_throttled: true,
            drop_failed_for_latency: true,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    /// Samples usable as latency/cost model input.
    pub valid: Vec<Sample>,
    /// Removed samples, each with `invalid_reason` set.
    pub invalidated: Vec<Sample>,
}

fn rejection(sample: &Sample, flags: FilterFlags) -> Option<InvalidReason> {
    if !sample.valid {
        return Some(sample.invalid_reason.unwrap_or(InvalidReason::Failed));
    }
    if flags.drop_throttled && sample.telemetry.throttled {
        Some(InvalidReason::Throttled)
    } else if flags.drop_failed_for_latency && sample.telemetry.failed {
        Some(InvalidReason::Failed)
    } else if flags.drop_cold_starts && sample.telemetry.cold_start {
        Some(InvalidReason::ColdStart)
    } else {
        None
    }
}

/// Splits samples into model input and invalidated observations.
pub fn validate_and_filter(samples: &[Sample], flags: FilterFlags) -> FilterOutcome {
    let mut out = FilterOutcome::default();
    for s in samples {
        match rejection(s, flags) {
            None => out.valid.push(s.clone()),
            Some(reason) => {
                let mut s = s.clone();
                s.valid = false;
                s.invalid_reason = Some(reason);
                out.invalidated.push(s);
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ReliabilityKey {
    pub function: String,
    pub memory_size: u32,
    pub workload_class: String,
}

/// Successes over total per (function, size, class), over unfiltered samples.
pub fn reliability_by_group(samples: &[Sample]) -> BTreeMap<ReliabilityKey, f64> {
    let mut counts: BTreeMap<ReliabilityKey, (usize, usize)> = BTreeMap::new();
    for s in samples {
        let key = ReliabilityKey {
            function: s.function.clone(),
            memory_size: s.memory_size(),
            workload_class: s.workload_class.clone(),
        };
        let e = counts.entry(key).or_default();
        e.0 += usize::from(s.succeeded());
        e.1 += 1;
    }
    counts
        .into_iter()
        .map(|(k, (ok, n))| (k, ok as f64 / n as f64))
        .collect()
}

/// Successes over total, or `None` for an empty set.
pub fn reliability(samples: &[Sample]) -> Option<f64> {
    if samples.is_empty() {
        return None;
    }
    let ok = samples.iter().filter(|s| s.succeeded()).count();
    Some(ok as f64 / samples.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::Policy;
    use crate::quality::QualityKind;
    use crate::sample::TelemetryRecord;
    use proptest::prelude::*;

    fn sample(cold: bool, failed: bool, throttled: bool) -> Sample {
        Sample {
            function: "f".into(),
            policy: Policy::default(),
            workload_class: "default".into(),
            qualities: [(QualityKind::ELat, 100.0)].into_iter().collect(),
            telemetry: TelemetryRecord {
                invocation: 0,
                deployment: 0,
                function: "f".into(),
                started_at: 0,
                duration: 100.0,
                billed_duration: 100,
                memory_size: 128,
                cold_start: cold,
                billed_cost: 0.0,
                throttled,
                failed,
            },
            valid: true,
            invalid_reason: None,
            virtual_timestamp: 0,
        }
    }

    fn two_classes() -> WorkloadModel {
        WorkloadModel {
            classes: vec![
                WorkloadClass {
                    id: "A".into(),
                    relative_frequency: 0.5,
                    payload_descriptor: "a".into(),
                },
                WorkloadClass {
                    id: "B".into(),
                    relative_frequency: 0.5,
                    payload_descriptor: "b".into(),
                },
            ],
            target_rate: TargetRate::OpenLoop {
                requests_per_second: 10.0,
            },
        }
    }

    #[test]
    fn single_class_stream() {
        let events = generate_events(&WorkloadModel::single("only", 2.0), 10, 1);
        assert_eq!(events.len(), 10);
        assert!(events.iter().all(|e| e.class_id == "only"));
        assert_eq!(events[3].issued_at, 1500);
    }

    #[test]
    fn class_mix_converges() {
        let events = generate_events(&two_classes(), 10_000, 42);
        let a = events.iter().filter(|e| e.class_id == "A").count() as f64;
        // binomial(10^4, 0.5): sigma = 50
        assert!((a - 5000.0).abs() <= 150.0, "count A = {a}");
    }

    #[test]
    fn same_seed_same_stream() {
        assert_eq!(
            generate_events(&two_classes(), 500, 9),
            generate_events(&two_classes(), 500, 9)
        );
        assert_ne!(
            generate_events(&two_classes(), 500, 9),
            generate_events(&two_classes(), 500, 10)
        );
    }

    #[test]
    fn frequencies_must_sum_to_one() {
        let mut m = two_classes();
        m.classes[1].relative_frequency = 0.6;
        assert!(m.validate().is_err());
    }

    #[test]
    fn cold_starts_are_invalidated() {
        let samples: Vec<_> = (0..10).map(|i| sample(i < 2, false, false)).collect();
        let out = validate_and_filter(&samples, FilterFlags::default());
        assert_eq!(out.valid.len(), 8);
        assert_eq!(out.invalidated.len(), 2);
        assert!(out
            .invalidated
            .iter()
            .all(|s| s.invalid_reason == Some(InvalidReason::ColdStart) && !s.valid));
    }

    #[test]
    fn no_cold_starts_is_identity() {
        let samples: Vec<_> = (0..5).map(|_| sample(false, false, false)).collect();
        let out = validate_and_filter(&samples, FilterFlags::default());
        assert_eq!(out.valid, samples);
    }

    #[test]
    fn failures_leave_latency_input_but_count_for_reliability() {
        let samples: Vec<_> = (0..10).map(|i| sample(false, i % 2 == 0, false)).collect();
        let out = validate_and_filter(&samples, FilterFlags::default());
        assert_eq!(out.valid.len(), 5);
        assert!(out.valid.iter().all(|s| !s.telemetry.failed));
        // by hand: 5 of the 10 succeeded
        assert_eq!(reliability(&samples), Some(0.5));
        let groups = reliability_by_group(&samples);
        assert_eq!(groups.values().copied().collect::<Vec<_>>(), vec![0.5]);
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent_and_partitions(
            flags in proptest::collection::vec((any::<bool>(), any::<bool>(), any::<bool>()), 0..40),
            drop in (any::<bool>(), any::<bool>(), any::<bool>()),
        ) {
            let samples: Vec<_> = flags.iter().map(|&(c, f, t)| sample(c, f, t)).collect();
            let flags = FilterFlags { drop_cold_starts: drop.0, drop_throttled: drop.1, drop_failed_for_latency: drop.2 };
            let once = validate_and_filter(&samples, flags);
            prop_assert_eq!(once.valid.len() + once.invalidated.len(), samples.len());
            let twice = validate_and_filter(&once.valid, flags);
            prop_assert_eq!(&twice.valid, &once.valid);
            prop_assert!(twice.invalidated.is_empty());
        }
    }
}
