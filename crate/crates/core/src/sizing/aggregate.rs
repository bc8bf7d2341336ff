//! Composition rules: latency sums over sequences, takes the maximum over
//! parallel branches and the expectation over switches; cost sums over
//! executed functions; reliability multiplies.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::quality::{Qualities, QualityKind};
use crate::suc::CompositionNode;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub(crate) struct Triple {
    pub lat: f64,
    pub cost: f64,
    pub rel: f64,
}

pub(crate) fn sequence(parts: impl IntoIterator<Item = Triple>) -> Triple {
    let mut t = Triple {
        lat: 0.0,
        cost: 0.0,
        rel: 1.0,
    };
    for p in parts {
        t.lat += p.lat;
        t.cost += p.cost;
        t.rel *= p.rel;
    }
    t
}

pub(crate) fn parallel(parts: impl IntoIterator<Item = Triple>) -> Triple {
    let mut t = Triple {
        lat: f64::NEG_INFINITY,
        cost: 0.0,
        rel: 1.0,
    };
    for p in parts {
        t.lat = t.lat.max(p.lat);
        t.cost += p.cost;
        t.rel *= p.rel;
    }
    t
}

pub(crate) fn switch(parts: impl IntoIterator<Item = (f64, Triple)>) -> Triple {
    let mut t = Triple::default();
    for (p, x) in parts {
        t.lat += p * x.lat;
        t.cost += p * x.cost;
        t.rel += p * x.rel;
    }
    t
}

fn eval(node: &CompositionNode, leaf: &impl Fn(&str) -> Result<Triple>) -> Result<Triple> {
    Ok(match node {
        CompositionNode::FunctionRef(name) => leaf(name)?,
        CompositionNode::Sequence(children) => sequence(
            children
                .iter()
                .map(|c| eval(c, leaf))
                .collect::<Result<Vec<_>>>()?,
        ),
        CompositionNode::Parallel(children) => parallel(
            children
                .iter()
                .map(|c| eval(c, leaf))
                .collect::<Result<Vec<_>>>()?,
        ),
        CompositionNode::Switch(branches) => switch(
            branches
                .iter()
                .map(|b| Ok((b.probability, eval(&b.child, leaf)?)))
                .collect::<Result<Vec<_>>>()?,
        ),
    })
}

/// Aggregates per-function ELat, ECost and Reliability over a composition.
/// A quality is aggregated only if every referenced function predicts it.
/// RLat is not aggregated: client overhead applies once, end to end.
pub fn aggregate_composition(
    node: &CompositionNode,
    per_function: &BTreeMap<String, Qualities>,
) -> Result<Qualities> {
    let refs = node.function_refs();
    for r in &refs {
        if !per_function.contains_key(*r) {
            return Err(Error::UnknownFunction(r.to_string()));
        }
    }
    let has = |k: QualityKind| refs.iter().all(|r| per_function[*r].contains_key(&k));
    let get = |name: &str, k: QualityKind| per_function[name].get(&k).copied().unwrap_or(0.0);
    let t = eval(node, &|name| {
        Ok(Triple {
            lat: get(name, QualityKind::ELat),
            cost: get(name, QualityKind::ECost),
            rel: get(name, QualityKind::Reliability),
        })
    })?;
    let mut out = Qualities::new();
    if has(QualityKind::ELat) {
        out.insert(QualityKind::ELat, t.lat);
    }
    if has(QualityKind::ECost) {
        out.insert(QualityKind::ECost, t.cost);
    }
    if has(QualityKind::Reliability) {
        out.insert(QualityKind::Reliability, t.rel);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preds() -> BTreeMap<String, Qualities> {
        BTreeMap::from([
            (
                "a".to_string(),
                Qualities::from([
                    (QualityKind::ELat, 3000.0),
                    (QualityKind::ECost, 0.1),
                    (QualityKind::Reliability, 0.99),
                ]),
            ),
            (
                "b".to_string(),
                Qualities::from([
                    (QualityKind::ELat, 5000.0),
                    (QualityKind::ECost, 0.2),
                    (QualityKind::Reliability, 0.98),
                ]),
            ),
        ])
    }

    fn refs() -> Vec<CompositionNode> {
        vec![
            CompositionNode::function("a"),
            CompositionNode::function("b"),
        ]
    }

    #[test]
    fn sequence_sums_latency_and_multiplies_reliability() {
        let q = aggregate_composition(&CompositionNode::Sequence(refs()), &preds()).unwrap();
        assert_eq!(q[&QualityKind::ELat], 8000.0);
        assert!((q[&QualityKind::Reliability] - 0.9702).abs() < 1e-15);
        assert!((q[&QualityKind::ECost] - 0.3).abs() < 1e-15);
    }

    #[test]
    fn parallel_takes_the_slowest_branch() {
        let q = aggregate_composition(&CompositionNode::Parallel(refs()), &preds()).unwrap();
        assert_eq!(q[&QualityKind::ELat], 5000.0);
    }

    #[test]
    fn switch_takes_the_expectation() {
        use crate::suc::SwitchBranch;
        let node = CompositionNode::Switch(vec![
            SwitchBranch {
                probability: 0.25,
                child: CompositionNode::function("a"),
            },
            SwitchBranch {
                probability: 0.75,
                child: CompositionNode::function("b"),
            },
        ]);
        let q = aggregate_composition(&node, &preds()).unwrap();
        assert_eq!(q[&QualityKind::ELat], 0.25 * 3000.0 + 0.75 * 5000.0);
    }

    #[test]
    fn dangling_reference_is_an_error() {
        let node = CompositionNode::Sequence(vec![CompositionNode::function("zzz")]);
        assert!(matches!(
            aggregate_composition(&node, &preds()),
            Err(Error::UnknownFunction(_))
        ));
    }
}
