//! Accuracy, cost and time of a sizing run, measured against the optimal
//! policy computed from the simulator's noise-free ground truth.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::experiment::{Tactic, TacticConfig};
use crate::goal::GoalSpec;
use crate::modeling::ModelStore;
use crate::policy::{Policy, DEFAULT_ENUMERATION_CAP};
use crate::quality::Qualities;
use crate::simulator::{GroundTruth, PlatformConfig, Simulator};
use crate::sizing::{
    brute_force_match, run_sizing, SearchSpace, SizingOptions, SizingRequest, SizingRun,
    SizingStatus, TaskTimes,
};
use crate::suc::SystemUnderConfiguration;
use crate::workload::WorkloadModel;

/// Guards the accuracy denominator against zero-valued optimal qualities.
pub const ACCURACY_EPSILON: f64 = 1e-9;

/// Every domain member of every function, scored with oracle qualities
/// mixed over the workload classes.
pub fn oracle_space(sim: &Simulator, workload: &WorkloadModel) -> Result<SearchSpace> {
    let suc = sim.suc();
    let sizes = suc
        .functions
        .iter()
        .map(|f| f.memory_domain().iter().collect())
        .collect();
    let classes = workload
        .classes
        .iter()
        .map(|c| (c.id.clone(), c.relative_frequency))
        .collect();
    SearchSpace::new(
        suc,
        sizes,
        classes,
        sim.config().client_overhead,
        Policy::baseline(suc),
        |f, c, m| sim.oracle_function_qualities(f, m, c),
    )
}

/// The policy minimizing the goal over noise-free qualities (p*).
pub fn optimal_policy(
    sim: &Simulator,
    goal: &GoalSpec,
    workload: &WorkloadModel,
    cap: u128,
) -> Result<(Policy, Qualities)> {
    let space = oracle_space(sim, workload)?;
    let r = brute_force_match(&space, goal, cap)?;
    if !r.is_feasible() {
        return Err(Error::NoFeasiblePolicy);
    }
    Ok((r.policy, r.predicted))
}

/// Weighted normalized L1 distance between two quality vectors.
pub fn accuracy_distance(goal: &GoalSpec, chosen: &Qualities, optimal: &Qualities) -> Result<f64> {
    let mut sum = 0.0;
    for (&k, &w) in &goal.weights {
        let q = *chosen.get(&k).ok_or(Error::UnmeasuredQuality(k))?;
        let o = *optimal.get(&k).ok_or(Error::UnmeasuredQuality(k))?;
        sum += w * (q - o).abs() / o.abs().max(ACCURACY_EPSILON);
    }
    Ok(sum)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub status: SizingStatus,
    pub accuracy: f64,
    /// Billed cost of every experiment invocation (USD).
    pub sampling_cost: f64,
    /// Virtual time from request to policy (ms).
    pub matching_time: f64,
    pub tasks: TaskTimes,
    pub invocations: u64,
    pub tactic_config: TacticConfig,
    pub p_star: Policy,
    pub chosen: Policy,
    pub optimal_qualities: Qualities,
    pub chosen_qualities: Qualities,
}

/// Scores a finished run. `oracle` must contain the chosen policy.
pub fn measure(
    run: &SizingRun,
    oracle: &SearchSpace,
    p_star: &Policy,
    goal: &GoalSpec,
) -> Result<EvaluationReport> {
    let qualities_of = |p: &Policy| -> Result<Qualities> {
        let state = oracle.state_of(p).ok_or_else(|| {
            Error::Invalid(format!(
                "policy {} is outside the oracle space",
                p.fingerprint()
            ))
        })?;
        Ok(oracle.qualities(&state))
    };
    let chosen = &run.result.policy;
    let chosen_q = qualities_of(chosen)?;
    let optimal_q = qualities_of(p_star)?;
    let billed = run
        .experiments
        .iter()
        .fold(0.0, |acc, e| acc + e.billed_cost);
    if run.invocations > 0 && run.experiments.is_empty() {
        return Err(Error::MissingTelemetry(
            "invocations without an experiment report".into(),
        ));
    }
    Ok(EvaluationReport {
        status: run.result.status,
        accuracy: accuracy_distance(goal, &chosen_q, &optimal_q)?,
        sampling_cost: billed,
        matching_time: run.tasks.total(),
        tasks: run.tasks,
        invocations: run.invocations,
        tactic_config: run.result.provenance.tactics.clone(),
        p_star: p_star.clone(),
        chosen: chosen.clone(),
        optimal_qualities: optimal_q,
        chosen_qualities: chosen_q,
    })
}

/// Platform, SUC, ground truth, goal and workload of one evaluation setting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub suc: SystemUnderConfiguration,
    pub ground_truth: GroundTruth,
    #[serde(default)]
    pub platform: PlatformConfig,
    pub goal: GoalSpec,
    pub workload: WorkloadModel,
}

impl Scenario {
    /// A fresh simulator seeded with `seed`.
    pub fn simulator(&self, seed: u64) -> Result<Simulator> {
        let cfg = PlatformConfig {
            rng_seed: seed,
            ..self.platform.clone()
        };
        Simulator::new(cfg, self.suc.clone(), self.ground_truth.clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixEntry {
    pub name: String,
    #[serde(default)]
    pub tactics: TacticConfig,
}

/// A cross product of tactic configurations and seeds over one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TacticMatrix {
    pub scenario: Scenario,
    pub configs: Vec<MatrixEntry>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub options: SizingOptions,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub config: String,
    pub seed: u64,
    pub report: EvaluationReport,
}

/// Evaluates one configuration on a fresh simulator. Configurations that
/// reuse models get a warm-up run first that fills `store`.
pub fn evaluate_config(
    scenario: &Scenario,
    tactics: &TacticConfig,
    options: &SizingOptions,
    seed: u64,
    store: &ModelStore,
) -> Result<EvaluationReport> {
    let mut sim = scenario.simulator(seed)?;
    let oracle = oracle_space(&sim, &scenario.workload)?;
    let p_star = brute_force_match(&oracle, &scenario.goal, DEFAULT_ENUMERATION_CAP)?;
    if !p_star.is_feasible() {
        return Err(Error::NoFeasiblePolicy);
    }
    let mut request = SizingRequest::new(
        scenario.suc.clone(),
        scenario.goal.clone(),
        scenario.workload.clone(),
    );
    request.options = SizingOptions {
        seed,
        ..options.clone()
    };
    if tactics.reuse_model.is_some() {
        request.tactics = TacticConfig {
            reuse_model: None,
            ..tactics.clone()
        };
        run_sizing(&request, &scenario.suc, &mut sim, store)?;
    }
    request.tactics = tactics.clone();
    let run = run_sizing(&request, &scenario.suc, &mut sim, store)?;
    measure(&run, &oracle, &p_star.policy, &scenario.goal)
}

/// Runs every configuration for every seed. Each pair gets its own model
/// store under `store_root/<config>/<seed>`.
pub fn run_matrix(matrix: &TacticMatrix, store_root: &Path) -> Result<Vec<MatrixRow>> {
    let mut names = std::collections::BTreeSet::new();
    for c in &matrix.configs {
        c.tactics.validate()?;
        if !names.insert(c.name.as_str()) {
            return Err(Error::Validation(vec![format!(
                "duplicate config name `{}`",
                c.name
            )]));
        }
    }
    let mut rows = Vec::new();
    for c in &matrix.configs {
        for &seed in &matrix.seeds {
            let dir = store_root.join(sanitize(&c.name)).join(seed.to_string());
            let store = ModelStore::new(&dir);
            let report =
                evaluate_config(&matrix.scenario, &c.tactics, &matrix.options, seed, &store)?;
            rows.push(MatrixRow {
                config: c.name.clone(),
                seed,
                report,
            });
        }
    }
    Ok(rows)
}

fn sanitize(name: &str) -> String {
    name.chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '-' || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect()
}

/// One CSV line per row: tactic flags, A, C, T and the per-task times.
pub fn matrix_csv(rows: &[MatrixRow]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = vec!["config".into(), "seed".into()];
    header.extend(Tactic::ALL.iter().map(|t| format!("{t:?}")));
    header.extend(
        [
            "status",
            "accuracy",
            "sampling_cost",
            "matching_time",
            "t_sample",
            "t_model",
            "t_match",
            "invocations",
        ]
        .map(String::from),
    );
    w.write_record(&header).map_err(csv_err)?;
    for r in rows {
        let rep = &r.report;
        let mut rec = vec![r.config.clone(), r.seed.to_string()];
        rec.extend(
            Tactic::ALL
                .iter()
                .map(|t| u8::from(t.enabled(&rep.tactic_config)).to_string()),
        );
        rec.push(
            serde_json::to_value(rep.status)?
                .as_str()
                .unwrap_or_default()
                .to_string(),
        );
        for v in [
            rep.accuracy,
            rep.sampling_cost,
            rep.matching_time,
            rep.tasks.sample,
            rep.tasks.model,
            rep.tasks.matching,
        ] {
            rec.push(v.to_string());
        }
        rec.push(rep.invocations.to_string());
        w.write_record(&rec).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Invalid(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Invalid(e.to_string()))
}

fn csv_err(e: csv::Error) -> Error {
    Error::Invalid(format!("csv: {e}"))
}

/// Mean accuracy, cost and time per configuration.
pub fn summarize(rows: &[MatrixRow]) -> BTreeMap<String, (f64, f64, f64)> {
    let mut acc: BTreeMap<String, (f64, f64, f64, u32)> = BTreeMap::new();
    for r in rows {
        let e = acc.entry(r.config.clone()).or_default();
        e.0 += r.report.accuracy;
        e.1 += r.report.sampling_cost;
        e.2 += r.report.matching_time;
        e.3 += 1;
    }
    acc.into_iter()
        .map(|(k, (a, c, t, n))| {
            let n = f64::from(n);
            (k, (a / n, c / n, t / n))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quality::QualityKind;

    fn goal(w: &[(QualityKind, f64)]) -> GoalSpec {
        GoalSpec::weighted(w.iter().copied())
    }

    #[test]
    fn identical_qualities_are_at_distance_zero() {
        let q: Qualities = [(QualityKind::RLat, 500.0), (QualityKind::ECost, 1e-5)].into();
        let g = goal(&[(QualityKind::RLat, 0.5), (QualityKind::ECost, 0.5)]);
        assert_eq!(accuracy_distance(&g, &q, &q).unwrap(), 0.0);
    }

    #[test]
    fn distance_is_weighted_relative_error() {
        let opt: Qualities = [(QualityKind::RLat, 400.0), (QualityKind::ECost, 2.0)].into();
        let got: Qualities = [(QualityKind::RLat, 500.0), (QualityKind::ECost, 1.0)].into();
        let g = goal(&[(QualityKind::RLat, 0.5), (QualityKind::ECost, 0.5)]);
        let d = accuracy_distance(&g, &got, &opt).unwrap();
        assert!((d - (0.5 * 0.25 + 0.5 * 0.5)).abs() < 1e-12);
    }

    #[test]
    fn zero_optimum_uses_the_epsilon() {
        let opt: Qualities = [(QualityKind::ECost, 0.0)].into();
        let got: Qualities = [(QualityKind::ECost, 1e-9)].into();
        let g = goal(&[(QualityKind::ECost, 1.0)]);
        assert!((accuracy_distance(&g, &got, &opt).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn missing_quality_is_an_error() {
        let opt: Qualities = [(QualityKind::ECost, 1.0)].into();
        let g = goal(&[(QualityKind::RLat, 1.0)]);
        assert!(accuracy_distance(&g, &opt, &opt).is_err());
    }
}
