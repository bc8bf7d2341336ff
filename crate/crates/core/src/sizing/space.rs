//! The joint memory space of a SUC and fast evaluation of its points.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::quality::{Qualities, QualityKind};
use crate::suc::{CompositionNode, KnobKind, SystemUnderConfiguration};

use super::aggregate::{parallel, sequence, switch, Triple};

#[derive(Debug, Clone)]
enum Node {
    Fn(usize),
    Seq(Vec<Node>),
    Par(Vec<Node>),
    Switch(Vec<(f64, Node)>),
}

fn compile(node: &CompositionNode, suc: &SystemUnderConfiguration) -> Result<Node> {
    Ok(match node {
        CompositionNode::FunctionRef(name) => Node::Fn(
            suc.function_index(name)
                .ok_or_else(|| Error::UnknownFunction(name.clone()))?,
        ),
        CompositionNode::Sequence(c) => {
            Node::Seq(c.iter().map(|n| compile(n, suc)).collect::<Result<_>>()?)
        }
        CompositionNode::Parallel(c) => {
            Node::Par(c.iter().map(|n| compile(n, suc)).collect::<Result<_>>()?)
        }
        CompositionNode::Switch(b) => Node::Switch(
            b.iter()
                .map(|b| Ok((b.probability, compile(&b.child, suc)?)))
                .collect::<Result<_>>()?,
        ),
    })
}

fn eval(node: &Node, leaf: &impl Fn(usize) -> Triple) -> Triple {
    match node {
        Node::Fn(i) => leaf(*i),
        Node::Seq(c) => sequence(c.iter().map(|n| eval(n, leaf))),
        Node::Par(c) => parallel(c.iter().map(|n| eval(n, leaf))),
        Node::Switch(b) => switch(b.iter().map(|(p, n)| (*p, eval(n, leaf)))),
    }
}

/// Candidate sizes per function with precomputed per-function predictions
/// for every workload class.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    functions: Vec<String>,
    sizes: Vec<Vec<u32>>,
    classes: Vec<(String, f64)>,
    /// `[class][function][size index]`
    tables: Vec<Vec<Vec<Triple>>>,
    root: Node,
    client_overhead: f64,
    base: Policy,
}

impl SearchSpace {
    /// `predict(function, class, size)` must return ELat, ECost and Reliability.
    pub fn new(
        suc: &SystemUnderConfiguration,
        sizes: Vec<Vec<u32>>,
        classes: Vec<(String, f64)>,
        client_overhead: f64,
        base: Policy,
        mut predict: impl FnMut(&str, &str, u32) -> Result<Qualities>,
    ) -> Result<Self> {
        if sizes.len() != suc.functions.len() {
            return Err(Error::Invalid(
                "one size list per function is required".into(),
            ));
        }
        if let Some(f) = suc.functions.iter().zip(&sizes).find(|(_, s)| s.is_empty()) {
            return Err(Error::Invalid(format!(
                "no candidate sizes for `{}`",
                f.0.name
            )));
        }
        if classes.is_empty() {
            return Err(Error::Invalid("no workload classes".into()));
        }
        let mut tables = Vec::with_capacity(classes.len());
        for (class, _) in &classes {
            let mut per_fn = Vec::with_capacity(sizes.len());
            for (f, fs) in suc.functions.iter().zip(&sizes) {
                let mut row = Vec::with_capacity(fs.len());
                for &m in fs {
                    let q = predict(&f.name, class, m)?;
                    let get = |k| q.get(&k).copied().ok_or(Error::UnmeasuredQuality(k));
                    row.push(Triple {
                        lat: get(QualityKind::ELat)?,
                        cost: get(QualityKind::ECost)?,
                        rel: get(QualityKind::Reliability)?,
                    });
                }
                per_fn.push(row);
            }
            tables.push(per_fn);
        }
        Ok(SearchSpace {
            functions: suc.functions.iter().map(|f| f.name.clone()).collect(),
            sizes,
            classes,
            tables,
            root: compile(&suc.composition.root, suc)?,
            client_overhead,
            base,
        })
    }

    pub fn functions(&self) -> &[String] {
        &self.functions
    }

    pub fn sizes(&self) -> &[Vec<u32>] {
        &self.sizes
    }

    /// Number of points, saturating.
    pub fn size(&self) -> u128 {
        self.sizes
            .iter()
            .fold(1u128, |acc, s| acc.saturating_mul(s.len() as u128))
    }

    pub fn memory(&self, state: &[usize]) -> Vec<u32> {
        state.iter().zip(&self.sizes).map(|(&i, s)| s[i]).collect()
    }

    pub fn total_memory(&self, state: &[usize]) -> u64 {
        self.memory(state).iter().map(|&m| m as u64).sum()
    }

    pub fn policy(&self, state: &[usize]) -> Policy {
        let mut p = self.base.clone();
        for ((f, &i), s) in self.functions.iter().zip(state).zip(&self.sizes) {
            p.set(f, KnobKind::Memory, s[i]);
        }
        p
    }

    /// Index vector of a policy, if every size is a candidate.
    pub fn state_of(&self, policy: &Policy) -> Option<Vec<usize>> {
        self.functions
            .iter()
            .zip(&self.sizes)
            .map(|(f, s)| s.iter().position(|&m| Some(m) == policy.memory(f)))
            .collect()
    }

    fn mix(&self, per_class: impl Fn(usize) -> Triple) -> Qualities {
        let mut lat = 0.0;
        let mut cost = 0.0;
        let mut rel = 0.0;
        for (c, (_, w)) in self.classes.iter().enumerate() {
            let t = per_class(c);
            lat += w * t.lat;
            cost += w * t.cost;
            rel += w * t.rel;
        }
        Qualities::from([
            (QualityKind::ELat, lat),
            (QualityKind::RLat, lat + self.client_overhead),
            (QualityKind::ECost, cost),
            (QualityKind::Reliability, rel),
        ])
    }

    /// Predicted qualities of one point, mixed over workload classes.
    pub fn qualities(&self, state: &[usize]) -> Qualities {
        self.mix(|c| eval(&self.root, &|f| self.tables[c][f][state[f]]))
    }

    /// Largest (`upper = true`) or smallest value each quality takes anywhere
    /// in the space. Aggregation is monotone in every function's value, so
    /// this aggregates per-function extremes; with several workload classes
    /// it is the class mix of per-class extremes, a bound on the true extreme.
    pub fn extremes(&self, upper: bool) -> Qualities {
        let pick = |a: f64, b: f64| if upper { a.max(b) } else { a.min(b) };
        let ext: Vec<Vec<Triple>> = self
            .tables
            .iter()
            .map(|per_fn| {
                per_fn
                    .iter()
                    .map(|row| {
                        let mut t = row[0];
                        for x in &row[1..] {
                            t.lat = pick(t.lat, x.lat);
                            t.cost = pick(t.cost, x.cost);
                            t.rel = pick(t.rel, x.rel);
                        }
                        t
                    })
                    .collect()
            })
            .collect();
        self.mix(|c| eval(&self.root, &|f| ext[c][f]))
    }

    /// Reference values for ZF over the whole space: maxima for costs,
    /// minima for benefits.
    pub fn normalization(&self) -> BTreeMap<QualityKind, f64> {
        let hi = self.extremes(true);
        let lo = self.extremes(false);
        QualityKind::ALL
            .into_iter()
            .filter_map(|k| {
                let src = if k.higher_is_better() { &lo } else { &hi };
                src.get(&k).map(|&v| (k, v))
            })
            .collect()
    }
}
