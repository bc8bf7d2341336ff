//! The weighted-sum score: each quality is normalized by its extreme over
//! the request set, weighted, summed, and averaged over requests.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::{Bound, GoalSpec};
use crate::quality::{Qualities, QualityKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZfInput {
    pub requests: Vec<Qualities>,
    pub weights: BTreeMap<QualityKind, f64>,
}

/// Per-quality references: the maximum for costs, the minimum for benefits.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    weights: Vec<(QualityKind, f64)>,
    reference: BTreeMap<QualityKind, f64>,
}

/// Normalized value of one quality. Lower is better for every kind: benefit
/// qualities (reliability, throughput) score `min / value`.
fn term(kind: QualityKind, value: f64, reference: f64) -> f64 {
    if kind.higher_is_better() {
        if value == 0.0 {
            1.0
        } else {
            reference / value
        }
    } else if reference == 0.0 {
        0.0
    } else {
        value / reference
    }
}

impl Normalizer {
    /// Takes references from `requests`.
    pub fn from_set(requests: &[Qualities], weights: &BTreeMap<QualityKind, f64>) -> Result<Self> {
        if requests.is_empty() {
            return Err(Error::EmptyRequestSet);
        }
        let mut reference = BTreeMap::new();
        for &kind in weights.keys() {
            let mut acc: Option<f64> = None;
            for r in requests {
                let v = *r.get(&kind).ok_or(Error::UnmeasuredQuality(kind))?;
                acc = Some(match acc {
                    None => v,
                    Some(a) if kind.higher_is_better() => a.min(v),
                    Some(a) => a.max(v),
                });
            }
            reference.insert(kind, acc.expect("non-empty request set"));
        }
        Self::with_reference(reference, weights)
    }

    /// Uses externally supplied references (e.g. extremes of a search space).
    pub fn with_reference(
        reference: BTreeMap<QualityKind, f64>,
        weights: &BTreeMap<QualityKind, f64>,
    ) -> Result<Self> {
        for &kind in weights.keys() {
            let r = *reference.get(&kind).ok_or(Error::UnmeasuredQuality(kind))?;
            if !r.is_finite() {
                return Err(Error::Invalid(format!(
                    "normalizing extreme of {kind} is not finite"
                )));
            }
        }
        Ok(Normalizer {
            weights: weights.iter().map(|(&k, &w)| (k, w)).collect(),
            reference,
        })
    }

    pub fn reference(&self) -> &BTreeMap<QualityKind, f64> {
        &self.reference
    }

    /// Weighted normalized sum for one request.
    pub fn score(&self, q: &Qualities) -> Result<f64> {
        let mut s = 0.0;
        for &(kind, w) in &self.weights {
            let v = *q.get(&kind).ok_or(Error::UnmeasuredQuality(kind))?;
            s += w * term(kind, v, self.reference[&kind]);
        }
        Ok(s)
    }
}

pub fn zf_score(input: &ZfInput) -> Result<f64> {
    let n = Normalizer::from_set(&input.requests, &input.weights)?;
    let mut total = 0.0;
    for r in &input.requests {
        total += n.score(r)?;
    }
    Ok(total / input.requests.len() as f64)
}

/// Bounds violated by `predicted`; a bound on a missing quality is an error.
pub fn violated(bounds: &[Bound], predicted: &Qualities) -> Result<Vec<Bound>> {
    GoalSpec {
        bounds: bounds.to_vec(),
        weights: BTreeMap::new(),
    }
    .violated_bounds(predicted)
}

/// Sum of normalized excesses over violated bounds.
pub fn penalty(bounds: &[Bound], predicted: &Qualities) -> Result<f64> {
    let mut p = 0.0;
    for b in bounds {
        let v = *predicted
            .get(&b.quality)
            .ok_or(Error::UnmeasuredQuality(b.quality))?;
        if !b.holds(v) {
            p += b.excess(v);
        }
    }
    Ok(p)
}

/// Keeps exactly the candidates that satisfy every bound.
pub fn filter_bounds<T: Clone>(
    candidates: &[(T, Qualities)],
    bounds: &[Bound],
) -> Result<Vec<(T, Qualities)>> {
    let mut out = Vec::new();
    for (c, q) in candidates {
        if violated(bounds, q)?.is_empty() {
            out.push((c.clone(), q.clone()));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::Operator;
    use proptest::prelude::*;

    fn q(pairs: &[(QualityKind, f64)]) -> Qualities {
        pairs.iter().copied().collect()
    }

    fn half_half() -> BTreeMap<QualityKind, f64> {
        BTreeMap::from([(QualityKind::ELat, 0.5), (QualityKind::ECost, 0.5)])
    }

    #[test]
    fn two_request_hand_check() {
        let input = ZfInput {
            requests: vec![
                q(&[(QualityKind::ELat, 100.0), (QualityKind::ECost, 0.1)]),
                q(&[(QualityKind::ELat, 200.0), (QualityKind::ECost, 0.2)]),
            ],
            weights: half_half(),
        };
        assert!((zf_score(&input).unwrap() - 0.75).abs() <= 1e-12);
    }

    #[test]
    fn single_request_scores_weight_sum() {
        let input = ZfInput {
            requests: vec![q(&[(QualityKind::ELat, 321.0), (QualityKind::ECost, 0.07)])],
            weights: half_half(),
        };
        assert_eq!(zf_score(&input).unwrap(), 1.0);
    }

    #[test]
    fn empty_set_and_zero_max() {
        let empty = ZfInput {
            requests: vec![],
            weights: half_half(),
        };
        assert!(matches!(zf_score(&empty), Err(Error::EmptyRequestSet)));
        let zero = ZfInput {
            requests: vec![q(&[(QualityKind::ELat, 0.0), (QualityKind::ECost, 0.0)])],
            weights: half_half(),
        };
        assert_eq!(zf_score(&zero).unwrap(), 0.0);
    }

    #[test]
    fn benefit_qualities_prefer_larger_values() {
        let w = BTreeMap::from([(QualityKind::Reliability, 1.0)]);
        let n = Normalizer::from_set(
            &[
                q(&[(QualityKind::Reliability, 0.9)]),
                q(&[(QualityKind::Reliability, 0.99)]),
            ],
            &w,
        )
        .unwrap();
        let lo = n.score(&q(&[(QualityKind::Reliability, 0.9)])).unwrap();
        let hi = n.score(&q(&[(QualityKind::Reliability, 0.99)])).unwrap();
        assert_eq!(lo, 1.0);
        assert!(hi < lo);
    }

    #[test]
    fn rlat_bound_keeps_the_800_candidate() {
        let cands = vec![
            ("a", q(&[(QualityKind::RLat, 800.0)])),
            ("b", q(&[(QualityKind::RLat, 1000.0)])),
        ];
        let bound = Bound::new(QualityKind::RLat, Operator::Le, 900.0);
        let kept = filter_bounds(&cands, &[bound]).unwrap();
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].0, "a");
        assert_eq!(filter_bounds(&cands, &[]).unwrap(), cands);
        let missing = Bound::new(QualityKind::ECost, Operator::Le, 1.0);
        assert!(filter_bounds(&cands, &[missing]).is_err());
    }

    proptest! {
        #[test]
        fn scaling_a_quality_keeps_the_ranking(
            lat in proptest::collection::vec(1.0f64..5000.0, 2..8),
            cost in proptest::collection::vec(1e-4f64..1.0, 8),
            k in 1e-3f64..1e3,
        ) {
            let reqs: Vec<Qualities> = lat.iter().zip(&cost)
                .map(|(&l, &c)| q(&[(QualityKind::ELat, l), (QualityKind::ECost, c)]))
                .collect();
            let scaled: Vec<Qualities> = reqs.iter().map(|r| {
                let mut r = r.clone();
                *r.get_mut(&QualityKind::ELat).unwrap() *= k;
                r
            }).collect();
            let argmin = |set: &[Qualities]| {
                let n = Normalizer::from_set(set, &half_half()).unwrap();
                let scores: Vec<f64> = set.iter().map(|r| n.score(r).unwrap()).collect();
                let mut order: Vec<usize> = (0..set.len()).collect();
                order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
                (order[0], scores)
            };
            let (a, sa) = argmin(&reqs);
            let (b, sb) = argmin(&scaled);
            // Ranks agree up to rounding of near-ties.
            prop_assert!(a == b || (sa[a] - sa[b]).abs() < 1e-12 || (sb[a] - sb[b]).abs() < 1e-12);
        }

        #[test]
        fn single_request_equals_weight_sum(l in 1.0f64..1e4, c in 1e-6f64..10.0, w in 0.0f64..1.0) {
            let weights = BTreeMap::from([(QualityKind::ELat, w), (QualityKind::ECost, 1.0 - w)]);
            let input = ZfInput { requests: vec![q(&[(QualityKind::ELat, l), (QualityKind::ECost, c)])], weights };
            prop_assert!((zf_score(&input).unwrap() - 1.0).abs() < 1e-15);
        }
    }
}
