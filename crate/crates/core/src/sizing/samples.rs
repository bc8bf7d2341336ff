//! Matching directly on observations: each sampled policy is scored by its
//! per-class mean qualities mixed by workload frequency.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::goal::GoalSpec;
use crate::policy::Policy;
use crate::quality::{Qualities, QualityKind};
use crate::sample::Sample;

use super::result::{
    ParetoPoint, SearchMethod, SearchStats, SizingProvenance, SizingResult, SizingStatus,
};
use super::search::EVALUATION_COST_MS;
use super::zf::{penalty, violated, Normalizer};

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (s, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| s / n as f64)
}

/// Mean qualities of one class's samples: reliability over all samples,
/// everything else over valid ones.
fn class_means(samples: &[&Sample]) -> Qualities {
    let mut q = Qualities::new();
    for kind in QualityKind::ALL {
        let v = if kind == QualityKind::Reliability {
            mean(samples.iter().filter_map(|s| s.quality(kind)))
        } else {
            mean(
                samples
                    .iter()
                    .filter(|s| s.valid)
                    .filter_map(|s| s.quality(kind)),
            )
        };
        if let Some(v) = v {
            q.insert(kind, v);
        }
    }
    q
}

/// Mean qualities per sampled policy, mixed over classes by `class_weights`
/// (renormalized over the classes observed; unknown classes weigh equally).
pub fn observed_qualities(
    samples: &[Sample],
    class_weights: &BTreeMap<String, f64>,
) -> BTreeMap<Policy, Qualities> {
    let mut groups: BTreeMap<&Policy, BTreeMap<&str, Vec<&Sample>>> = BTreeMap::new();
    for s in samples {
        groups
            .entry(&s.policy)
            .or_default()
            .entry(&s.workload_class)
            .or_default()
            .push(s);
    }
    let mut out = BTreeMap::new();
    for (policy, classes) in groups {
        let known = classes.keys().all(|c| class_weights.contains_key(*c));
        let weight = |c: &str| if known { class_weights[c] } else { 1.0 };
        let total: f64 = classes.keys().map(|c| weight(c)).sum();
        let mut mixed: BTreeMap<QualityKind, (f64, f64)> = BTreeMap::new();
        for (class, ss) in &classes {
            let w = weight(class) / total;
            for (k, v) in class_means(ss) {
                let e = mixed.entry(k).or_default();
                e.0 += w * v;
                e.1 += w;
            }
        }
        let q: Qualities = mixed
            .into_iter()
            .filter(|(_, (_, w))| (*w - 1.0).abs() < 1e-9)
            .map(|(k, (v, _))| (k, v))
            .collect();
        out.insert(policy.clone(), q);
    }
    out
}

fn total_memory(p: &Policy) -> u64 {
    p.total_memory()
}

/// Picks the sampled policy with the lowest ZF among those meeting every
/// bound. ZF references come from the feasible set itself.
pub fn match_samples(
    samples: &[Sample],
    goal: &GoalSpec,
    class_weights: &BTreeMap<String, f64>,
) -> Result<SizingResult> {
    let observed = observed_qualities(samples, class_weights);
    if observed.is_empty() {
        return Err(Error::EmptyRequestSet);
    }
    let needed = goal.referenced_qualities();
    let complete: Vec<(Policy, Qualities)> = observed
        .into_iter()
        .filter(|(_, q)| needed.iter().all(|k| q.contains_key(k)))
        .collect();
    if complete.is_empty() {
        let k = needed.first().copied().unwrap_or(QualityKind::ELat);
        return Err(Error::UnmeasuredQuality(k));
    }
    let mut feasible = Vec::new();
    for (p, q) in &complete {
        if violated(&goal.bounds, q)?.is_empty() {
            feasible.push((p.clone(), q.clone()));
        }
    }
    let evaluations = complete.len() as u64;
    let stats = SearchStats {
        method: SearchMethod::SampleBased,
        iterations: evaluations,
        evaluations,
        elapsed: evaluations as f64 * EVALUATION_COST_MS,
    };

    if feasible.is_empty() {
        // Nearest miss: smallest penalty, scored against all candidates.
        let requests: Vec<Qualities> = complete.iter().map(|c| c.1.clone()).collect();
        let norm = Normalizer::from_set(&requests, &goal.weights)?;
        let mut best: Option<(f64, f64, Policy, Qualities)> = None;
        for (p, q) in complete {
            let pen = penalty(&goal.bounds, &q)?;
            let zf = norm.score(&q)?;
            let better = match &best {
                None => true,
                Some((bp, bz, bpol, _)) => {
                    pen.total_cmp(bp)
                        .then(zf.total_cmp(bz))
                        .then(total_memory(&p).cmp(&total_memory(bpol)))
                        .then(p.cmp(bpol))
                        == Ordering::Less
                }
            };
            if better {
                best = Some((pen, zf, p, q));
            }
        }
        let (_, zf, policy, predicted) = best.expect("non-empty");
        return Ok(SizingResult {
            status: SizingStatus::Infeasible,
            violated_bounds: violated(&goal.bounds, &predicted)?,
            policy,
            predicted,
            zf_score: zf,
            pareto_front: Vec::new(),
            search_stats: stats,
            provenance: SizingProvenance::default(),
        });
    }

    let requests: Vec<Qualities> = feasible.iter().map(|c| c.1.clone()).collect();
    let norm = Normalizer::from_set(&requests, &goal.weights)?;
    let mut scored: Vec<(f64, Policy, Qualities)> = Vec::with_capacity(feasible.len());
    for (p, q) in feasible {
        scored.push((norm.score(&q)?, p, q));
    }
    scored.sort_by(|a, b| {
        a.0.total_cmp(&b.0)
            .then(total_memory(&a.1).cmp(&total_memory(&b.1)))
            .then(a.1.cmp(&b.1))
    });
    let front = front_of(&scored, goal);
    let (zf, policy, predicted) = scored.swap_remove(0);
    Ok(SizingResult {
        status: SizingStatus::Feasible,
        policy,
        predicted,
        zf_score: zf,
        violated_bounds: Vec::new(),
        pareto_front: front,
        search_stats: stats,
        provenance: SizingProvenance::default(),
    })
}

fn front_of(scored: &[(f64, Policy, Qualities)], goal: &GoalSpec) -> Vec<ParetoPoint> {
    let mut dims = vec![QualityKind::RLat, QualityKind::ECost];
    for (&k, &w) in &goal.weights {
        if w > 0.0 && !dims.contains(&k) {
            dims.push(k);
        }
    }
    let key = |q: &Qualities| -> Option<Vec<f64>> {
        dims.iter()
            .map(|k| q.get(k).map(|&v| if k.higher_is_better() { -v } else { v }))
            .collect()
    };
    let keyed: Vec<(Option<Vec<f64>>, &(f64, Policy, Qualities))> =
        scored.iter().map(|s| (key(&s.2), s)).collect();
    keyed
        .iter()
        .filter(|(k, _)| {
            let Some(k) = k else { return false };
            !keyed.iter().any(|(o, _)| {
                o.as_ref().is_some_and(|o| {
                    o.iter().zip(k).all(|(x, y)| x <= y) && o.iter().zip(k).any(|(x, y)| x < y)
                })
            })
        })
        .map(|(_, (zf, p, q))| ParetoPoint {
            policy: p.clone(),
            predicted: q.clone(),
            zf_score: *zf,
        })
        .collect()
}
