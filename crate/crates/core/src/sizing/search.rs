//! Exhaustive and annealing search over a [`SearchSpace`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::{Bound, GoalSpec};
use crate::quality::{Qualities, QualityKind};

use super::result::{
    ParetoPoint, SearchMethod, SearchStats, SizingProvenance, SizingResult, SizingStatus,
};
use super::space::SearchSpace;
use super::zf::{penalty, violated, Normalizer};

/// Virtual cost of scoring one point (ms).
pub const EVALUATION_COST_MS: f64 = 0.01;

/// Scored point of the space.
#[derive(Debug, Clone)]
pub(crate) struct Scored {
    pub state: Vec<usize>,
    pub qualities: Qualities,
    pub zf: f64,
    pub penalty: f64,
    pub total_memory: u64,
}

impl Scored {
    fn feasible(&self) -> bool {
        self.penalty == 0.0
    }

    /// Feasible before infeasible; then smaller penalty, smaller ZF,
    /// smaller total memory, lexicographically smaller sizes.
    fn rank(&self, other: &Scored) -> Ordering {
        other
            .feasible()
            .cmp(&self.feasible())
            .then_with(|| self.penalty.total_cmp(&other.penalty))
            .then_with(|| self.zf.total_cmp(&other.zf))
            .then_with(|| self.total_memory.cmp(&other.total_memory))
            .then_with(|| self.state.cmp(&other.state))
    }

    fn energy(&self) -> f64 {
        self.zf + self.penalty
    }
}

pub(crate) struct Scorer<'a> {
    pub space: &'a SearchSpace,
    normalizer: Normalizer,
    bounds: &'a [Bound],
    memo: Option<HashMap<Vec<usize>, Scored>>,
    /// Distinct points scored.
    pub evaluations: u64,
}

impl<'a> Scorer<'a> {
    pub fn new(space: &'a SearchSpace, goal: &'a GoalSpec) -> Result<Self> {
        let normalizer = Normalizer::with_reference(space.normalization(), &goal.weights)?;
        for b in &goal.bounds {
            if b.quality == QualityKind::Throughput {
                return Err(Error::UnmeasuredQuality(b.quality));
            }
        }
        Ok(Scorer {
            space,
            normalizer,
            bounds: &goal.bounds,
            memo: None,
            evaluations: 0,
        })
    }

    /// Remembers scored points so revisits are free.
    fn memoized(mut self) -> Self {
        self.memo = Some(HashMap::new());
        self
    }

    pub fn score(&mut self, state: &[usize]) -> Result<Scored> {
        if let Some(hit) = self.memo.as_ref().and_then(|m| m.get(state)) {
            return Ok(hit.clone());
        }
        self.evaluations += 1;
        let qualities = self.space.qualities(state);
        let s = Scored {
            zf: self.normalizer.score(&qualities)?,
            penalty: penalty(self.bounds, &qualities)?,
            total_memory: self.space.total_memory(state),
            state: state.to_vec(),
            qualities,
        };
        if let Some(m) = self.memo.as_mut() {
            m.insert(s.state.clone(), s.clone());
        }
        Ok(s)
    }
}

fn keep_better(best: &mut Option<Scored>, cand: &Scored) {
    if best.as_ref().is_none_or(|b| cand.rank(b) == Ordering::Less) {
        *best = Some(cand.clone());
    }
}

/// Orientation in which smaller is better for every dimension.
fn pareto_dims(goal: &GoalSpec) -> Vec<QualityKind> {
    let mut dims = vec![QualityKind::RLat, QualityKind::ECost];
    for (&k, &w) in &goal.weights {
        if w > 0.0 && !dims.contains(&k) && k != QualityKind::Throughput {
            dims.push(k);
        }
    }
    dims
}

fn oriented(q: &Qualities, dims: &[QualityKind]) -> Vec<f64> {
    dims.iter()
        .map(|k| {
            let v = q.get(k).copied().unwrap_or(0.0);
            if k.higher_is_better() {
                -v
            } else {
                v
            }
        })
        .collect()
}

fn dominates(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x <= y) && a.iter().zip(b).any(|(x, y)| x < y)
}

/// Non-dominated subset of feasible points, ordered by ZF then tie-breaks.
pub(crate) fn pareto_front(
    space: &SearchSpace,
    goal: &GoalSpec,
    points: impl IntoIterator<Item = Scored>,
) -> Vec<ParetoPoint> {
    let dims = pareto_dims(goal);
    let mut pts: Vec<(Vec<f64>, Scored)> = points
        .into_iter()
        .filter(Scored::feasible)
        .map(|s| (oriented(&s.qualities, &dims), s))
        .collect();
    // A dominating point sorts lexicographically before what it dominates.
    pts.sort_by(|a, b| {
        a.0.iter()
            .zip(&b.0)
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(Ordering::Equal)
            .then_with(|| a.1.rank(&b.1))
    });
    let mut front: Vec<(Vec<f64>, Scored)> = Vec::new();
    for (d, s) in pts {
        if dims.len() == 2 {
            if let Some(last) = front.last() {
                if d[1] >= last.0[1] {
                    continue;
                }
            }
        } else if front.iter().any(|(f, _)| dominates(f, &d) || *f == d) {
            continue;
        }
        front.push((d, s));
    }
    let mut out: Vec<Scored> = front.into_iter().map(|(_, s)| s).collect();
    out.sort_by(|a, b| a.rank(b));
    out.into_iter()
        .map(|s| ParetoPoint {
            policy: space.policy(&s.state),
            predicted: s.qualities,
            zf_score: s.zf,
        })
        .collect()
}

pub(crate) fn finish(
    space: &SearchSpace,
    goal: &GoalSpec,
    chosen: Scored,
    status: SizingStatus,
    front: Vec<ParetoPoint>,
    method: SearchMethod,
    iterations: u64,
    evaluations: u64,
) -> Result<SizingResult> {
    let violated_bounds = violated(&goal.bounds, &chosen.qualities)?;
    let status = match status {
        SizingStatus::Unoptimized => SizingStatus::Unoptimized,
        _ if violated_bounds.is_empty() => SizingStatus::Feasible,
        _ => SizingStatus::Infeasible,
    };
    Ok(SizingResult {
        status,
        policy: space.policy(&chosen.state),
        predicted: chosen.qualities,
        zf_score: chosen.zf,
        violated_bounds,
        pareto_front: front,
        search_stats: SearchStats {
            method,
            iterations,
            evaluations,
            elapsed: evaluations as f64 * EVALUATION_COST_MS,
        },
        provenance: SizingProvenance::default(),
    })
}

/// Scores every point; the best feasible one wins.
pub fn brute_force_match(space: &SearchSpace, goal: &GoalSpec, cap: u128) -> Result<SizingResult> {
    let size = space.size();
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    let mut scorer = Scorer::new(space, goal)?;
    let radix: Vec<usize> = space.sizes().iter().map(Vec::len).collect();
    let mut state = vec![0usize; radix.len()];
    let mut best: Option<Scored> = None;
    let mut feasible = Vec::new();
    loop {
        let s = scorer.score(&state)?;
        keep_better(&mut best, &s);
        if s.feasible() {
            feasible.push(s);
        }
        // Odometer, last function fastest.
        let mut k = radix.len();
        loop {
            if k == 0 {
                let front = pareto_front(space, goal, feasible);
                let chosen = best.expect("space is non-empty");
                let n = scorer.evaluations;
                return finish(
                    space,
                    goal,
                    chosen,
                    SizingStatus::Feasible,
                    front,
                    SearchMethod::BruteForce,
                    n,
                    n,
                );
            }
            k -= 1;
            state[k] += 1;
            if state[k] < radix[k] {
                break;
            }
            state[k] = 0;
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnnealSchedule {
    pub initial_temperature: f64,
    pub cooling: f64,
    pub steps_per_temperature: u64,
    pub min_temperature: f64,
    /// Extra runs from random starts after the first.
    pub restarts: u32,
    /// Hard cap on annealing steps over all runs.
    pub max_iterations: Option<u64>,
    /// End a run once a whole temperature level accepts no move.
    pub stop_when_frozen: bool,
}

impl Default for AnnealSchedule {
    fn default() -> Self {
        AnnealSchedule {
            initial_temperature: 1.0,
            cooling: 0.95,
            steps_per_temperature: 200,
            min_temperature: 1e-4,
            restarts: 2,
            max_iterations: None,
            stop_when_frozen: true,
        }
    }
}

impl AnnealSchedule {
    fn has_budget(&self) -> bool {
        self.steps_per_temperature > 0
            && self.max_iterations != Some(0)
            && self.initial_temperature >= self.min_temperature
    }

    pub fn validate(&self) -> Result<()> {
        let mut v = Vec::new();
        if !(self.cooling > 0.0 && self.cooling < 1.0) {
            v.push("cooling must be in (0, 1)".to_string());
        }
        if !(self.min_temperature > 0.0) {
            v.push("min_temperature must be positive".to_string());
        }
        if !(self.initial_temperature > 0.0) {
            v.push("initial_temperature must be positive".to_string());
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(v))
        }
    }
}

/// Simulated annealing with a penalty for bound violations, restarts and
/// a final coordinate-descent polish.
pub fn anneal_match(
    space: &SearchSpace,
    goal: &GoalSpec,
    schedule: &AnnealSchedule,
    seed: u64,
) -> Result<SizingResult> {
    schedule.validate()?;
    let mut scorer = Scorer::new(space, goal)?.memoized();
    let radix: Vec<usize> = space.sizes().iter().map(Vec::len).collect();
    let initial: Vec<usize> = radix.iter().map(|&n| (n - 1) / 2).collect();

    if !schedule.has_budget() {
        let s = scorer.score(&initial)?;
        let n = scorer.evaluations;
        return finish(
            space,
            goal,
            s,
            SizingStatus::Unoptimized,
            Vec::new(),
            SearchMethod::Anneal,
            0,
            n,
        );
    }

    let movable: Vec<usize> = (0..radix.len()).filter(|&j| radix[j] > 1).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut best: Option<Scored> = None;
    let mut visited: BTreeMap<Vec<usize>, Scored> = BTreeMap::new();
    let mut iterations = 0u64;
    let cap = schedule.max_iterations.unwrap_or(u64::MAX);

    for run in 0..=schedule.restarts {
        let start: Vec<usize> = if run == 0 {
            initial.clone()
        } else {
            radix.iter().map(|&n| rng.random_range(0..n)).collect()
        };
        let mut cur = scorer.score(&start)?;
        keep_better(&mut best, &cur);
        let mut t = schedule.initial_temperature;
        while t >= schedule.min_temperature && !movable.is_empty() && iterations < cap {
            let mut moved = false;
            for _ in 0..schedule.steps_per_temperature {
                if iterations >= cap {
                    break;
                }
                iterations += 1;
                let j = movable[rng.random_range(0..movable.len())];
                let n = radix[j];
                let width = ((t / schedule.initial_temperature) * (n - 1) as f64).round() as usize;
                let h = width.max(1);
                let lo = cur.state[j].saturating_sub(h);
                let hi = (cur.state[j] + h).min(n - 1);
                let mut next = cur.state.clone();
                // Draw from the window excluding the current index.
                let pick = rng.random_range(lo..hi);
                next[j] = if pick >= cur.state[j] { pick + 1 } else { pick };
                let cand = scorer.score(&next)?;
                let delta = cand.energy() - cur.energy();
                let accept = delta <= 0.0 || rng.random::<f64>() < (-delta / t).exp();
                if cand.feasible() {
                    visited
                        .entry(cand.state.clone())
                        .or_insert_with(|| cand.clone());
                }
                keep_better(&mut best, &cand);
                if accept {
                    moved |= cand.state != cur.state;
                    cur = cand;
                }
            }
            if schedule.stop_when_frozen && !moved {
                break;
            }
            t *= schedule.cooling;
        }
    }

    // Coordinate descent from the best point found.
    let mut cur = best.expect("at least one point scored");
    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    loop {
        let mut improved = false;
        for j in 0..radix.len() {
            for i in 0..radix[j] {
                if i == cur.state[j] {
                    continue;
                }
                let mut next = cur.state.clone();
                next[j] = i;
                if !seen.insert(next.clone()) {
                    continue;
                }
                let cand = scorer.score(&next)?;
                if cand.feasible() {
                    visited
                        .entry(cand.state.clone())
                        .or_insert_with(|| cand.clone());
                }
                if cand.rank(&cur) == Ordering::Less {
                    cur = cand;
                    improved = true;
                }
            }
        }
        if !improved {
            break;
        }
    }
    if cur.feasible() {
        visited
            .entry(cur.state.clone())
            .or_insert_with(|| cur.clone());
    }
    let front = pareto_front(space, goal, visited.into_values());
    let n = scorer.evaluations;
    finish(
        space,
        goal,
        cur,
        SizingStatus::Feasible,
        front,
        SearchMethod::Anneal,
        iterations,
        n,
    )
}
