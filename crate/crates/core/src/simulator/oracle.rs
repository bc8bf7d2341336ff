//! Noise-free expected qualities straight from the ground truth.

use super::Simulator;
use crate::error::{Error, Result};
use crate::policy::Policy;
use crate::quality::{Qualities, QualityKind};
use crate::suc::CompositionNode;

#[derive(Debug, Clone, Copy)]
struct Expected {
    latency: f64,
    cost: f64,
    reliability: f64,
}

impl Simulator {
    /// Expected ELat, RLat, ECost and Reliability of one function at size `memory`.
    pub fn oracle_function_qualities(
        &self,
        function: &str,
        memory: u32,
        workload_class: &str,
    ) -> Result<Qualities> {
        let e = self.expected(function, memory, workload_class)?;
        Ok(self.to_qualities(e))
    }

    /// Expected qualities of the whole composition under `policy`.
    ///
    /// Latency sums over sequences, takes the maximum over parallel branches and
    /// the probability-weighted mean over switches. Cost adds up over every
    /// executed function, reliability multiplies. RLat adds the client overhead
    /// once to the end-to-end execution latency.
    pub fn oracle_qualities(&self, policy: &Policy, workload_class: &str) -> Result<Qualities> {
        let e = self.eval(&self.suc.composition.root, policy, workload_class)?;
        Ok(self.to_qualities(e))
    }

    fn to_qualities(&self, e: Expected) -> Qualities {
        [
            (QualityKind::ELat, e.latency),
            (QualityKind::RLat, e.latency + self.config.client_overhead),
            (QualityKind::ECost, e.cost),
            (QualityKind::Reliability, e.reliability),
        ]
        .into_iter()
        .collect()
    }

    fn expected(&self, function: &str, memory: u32, workload_class: &str) -> Result<Expected> {
        let truth = self.truth.lookup(function, workload_class)?;
        let latency = truth.latency(memory);
        Ok(Expected {
            latency,
            cost: self.config.cost_params().cost_of(memory, latency),
            reliability: truth.success_rate(memory),
        })
    }

    fn eval(&self, node: &CompositionNode, policy: &Policy, class: &str) -> Result<Expected> {
        match node {
            CompositionNode::FunctionRef(name) => {
                let m = policy
                    .memory(name)
                    .ok_or_else(|| Error::UnknownFunction(name.clone()))?;
                self.expected(name, m, class)
            }
            CompositionNode::Sequence(children) | CompositionNode::Parallel(children) => {
                let parts = children
                    .iter()
                    .map(|c| self.eval(c, policy, class))
                    .collect::<Result<Vec<_>>>()?;
                let sequential = matches!(node, CompositionNode::Sequence(_));
                let mut latency = if sequential { 0.0 } else { f64::NEG_INFINITY };
                let mut cost = 0.0;
                let mut reliability = 1.0;
                for p in parts {
                    latency = if sequential {
                        latency + p.latency
                    } else {
                        latency.max(p.latency)
                    };
                    cost += p.cost;
                    reliability *= p.reliability;
                }
                Ok(Expected {
                    latency,
                    cost,
                    reliability,
                })
            }
            CompositionNode::Switch(branches) => {
                let mut acc = Expected {
                    latency: 0.0,
                    cost: 0.0,
                    reliability: 0.0,
                };
                for b in branches {
                    let p = self.eval(&b.child, policy, class)?;
                    acc.latency += b.probability * p.latency;
                    acc.cost += b.probability * p.cost;
                    acc.reliability += b.probability * p.reliability;
                }
                Ok(acc)
            }
        }
    }
}
