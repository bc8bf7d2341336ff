mod common;

use common::{config, simulator, single, CURVE};
use sizer_core::experiment::{
    execute_plan, monotonic_prune_sweep, plan_max_spacing, size_aggregate, ExperimentOptions,
    SamplingMode, SamplingPlan, TacticConfig,
};
use sizer_core::workload::{TargetRate, WorkloadClass};
use sizer_core::{
    Bound, Domain, Error, ExpDecay, GroundTruthEntry, Operator, Platform, QualityKind,
    WorkloadModel,
};

fn plan(mode: SamplingMode) -> SamplingPlan {
    let sizes = plan_max_spacing(&Domain::memory_default(), 5).unwrap();
    SamplingPlan::new("f", sizes).with_mode(mode)
}

fn workload() -> WorkloadModel {
    WorkloadModel::single("default", 1.0)
}

fn noisy() -> Vec<GroundTruthEntry> {
    vec![GroundTruthEntry::new("f", "*", CURVE).with_noise(0.05)]
}

#[test]
fn sequential_time_is_sum_of_convergence_and_blocks() {
    let mut sim = simulator(config(1, 5000), single(Domain::memory_default()), noisy());
    let r = execute_plan(
        &mut sim,
        &single(Domain::memory_default()),
        &plan(SamplingMode::Sequential),
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(r.elapsed, 175_000);
    assert_eq!(r.samples.len(), 100);
    assert_eq!(r.invocations, 100);
    assert_eq!(r.throttled, 0);
}

#[test]
fn manifold_overlaps_runs_at_equal_cost() {
    let suc = single(Domain::memory_default());
    let opts = ExperimentOptions::default();
    let mut a = simulator(config(3, 5000), suc.clone(), noisy());
    let seq = execute_plan(
        &mut a,
        &suc,
        &plan(SamplingMode::Sequential),
        &TacticConfig::default(),
        &workload(),
        &opts,
    )
    .unwrap();
    let mut b = simulator(config(3, 5000), suc.clone(), noisy());
    let man = execute_plan(
        &mut b,
        &suc,
        &plan(SamplingMode::Manifold),
        &TacticConfig::default(),
        &workload(),
        &opts,
    )
    .unwrap();

    assert_eq!(man.elapsed, 35_000);
    assert!((seq.billed_cost - man.billed_cost).abs() < 1e-9);
    assert!(man.elapsed as f64 / seq.elapsed as f64 <= 0.25);

    // Same multiset of (size, measured qualities).
    let key = |s: &sizer_core::Sample| (s.memory_size(), format!("{:?}", s.qualities), s.valid);
    let mut x: Vec<_> = seq.samples.iter().map(key).collect();
    let mut y: Vec<_> = man.samples.iter().map(key).collect();
    x.sort();
    y.sort();
    assert_eq!(x, y);
}

#[test]
fn manifold_aborts_when_throttled() {
    let suc = single(Domain::memory_default());
    let mut cfg = config(3, 5000);
    cfg.max_concurrent_executions = 1;
    let mut sim = simulator(cfg, suc.clone(), noisy());
    let err = execute_plan(
        &mut sim,
        &suc,
        &plan(SamplingMode::Manifold),
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap_err();
    assert!(matches!(err, Error::ThrottleLimit { limit: 1, .. }));
    assert!(err
        .to_string()
        .starts_with("manifold exceeded concurrency limit"));
}

#[test]
fn sequential_is_unaffected_by_a_limit_of_one() {
    let suc = single(Domain::memory_default());
    let mut cfg = config(3, 5000);
    cfg.max_concurrent_executions = 1;
    let mut sim = simulator(cfg, suc.clone(), noisy());
    let r = execute_plan(
        &mut sim,
        &suc,
        &plan(SamplingMode::Sequential),
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(r.throttled, 0);
}

#[test]
fn isolation_halves_runs() {
    let suc = single(Domain::memory_default());
    let mut sim = simulator(config(3, 0), suc.clone(), noisy());
    let t = TacticConfig {
        isolate_executions: true,
        ..TacticConfig::default()
    };
    let r = execute_plan(
        &mut sim,
        &suc,
        &plan(SamplingMode::Sequential),
        &t,
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(r.runs_per_size, 10);
    assert_eq!(r.samples.len(), 50);
}

#[test]
fn manual_operations_add_delay_per_deployment() {
    let suc = single(Domain::memory_default());
    let mut sim = simulator(config(3, 5000), suc.clone(), noisy());
    let t = TacticConfig {
        automate_ops: false,
        ..TacticConfig::default()
    };
    let r = execute_plan(
        &mut sim,
        &suc,
        &plan(SamplingMode::Sequential),
        &t,
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(r.elapsed, 5 * (5000 + 300_000 + 30_000));
}

#[test]
fn first_sample_per_size_is_a_cold_start() {
    let suc = single(Domain::memory_default());
    let mut sim = simulator(config(3, 0), suc.clone(), noisy());
    let r = execute_plan(
        &mut sim,
        &suc,
        &plan(SamplingMode::Sequential),
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    let invalid = r.samples.iter().filter(|s| !s.valid).count();
    assert_eq!(invalid, 5);
    assert!(r.samples.iter().all(|s| s.violations().is_empty()));
}

#[test]
fn stratified_classes_vs_drawn_mix() {
    let suc = single(Domain::values([128, 256, 512]));
    let wl = WorkloadModel {
        classes: vec![
            WorkloadClass {
                id: "small".into(),
                relative_frequency: 0.9,
                payload_descriptor: String::new(),
            },
            WorkloadClass {
                id: "large".into(),
                relative_frequency: 0.1,
                payload_descriptor: String::new(),
            },
        ],
        target_rate: TargetRate::OpenLoop {
            requests_per_second: 1.0,
        },
    };
    let mut sim = simulator(config(3, 0), suc.clone(), noisy());
    let mut p = SamplingPlan::new("f", vec![128, 256, 512]).with_runs(10);
    p.workload_classes = vec!["large".into()];
    let r = execute_plan(
        &mut sim,
        &suc,
        &p,
        &TacticConfig::default(),
        &wl,
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert!(r.samples.iter().all(|s| s.workload_class == "large"));

    let t = TacticConfig {
        workload_classes_known: false,
        ..TacticConfig::default()
    };
    let r = execute_plan(&mut sim, &suc, &p, &t, &wl, &ExperimentOptions::default()).unwrap();
    assert_eq!(r.samples.len(), 3 * 20);
    assert!(r.samples.iter().any(|s| s.workload_class == "small"));
}

#[test]
fn invalid_plans_are_rejected() {
    let suc = single(Domain::values([128, 256, 512]));
    let mut sim = simulator(config(3, 0), suc.clone(), noisy());
    for p in [
        SamplingPlan::new("f", vec![256, 128]),
        SamplingPlan::new("f", vec![128, 300]),
        SamplingPlan::new("g", vec![128]),
        SamplingPlan::new("f", vec![128]).with_runs(0),
    ] {
        let r = execute_plan(
            &mut sim,
            &suc,
            &p,
            &TacticConfig::default(),
            &workload(),
            &ExperimentOptions::default(),
        );
        assert!(matches!(r, Err(Error::Validation(_))), "{p:?}");
    }
    let both = TacticConfig {
        manifold_testbeds: true,
        monotonic_prune: Some(Bound::new(QualityKind::ELat, Operator::Le, 1.0)),
        ..TacticConfig::default()
    };
    let r = execute_plan(
        &mut sim,
        &suc,
        &SamplingPlan::new("f", vec![128]),
        &both,
        &workload(),
        &ExperimentOptions::default(),
    );
    assert!(matches!(r, Err(Error::Validation(_))));
}

// Descending sizes 1024, 512, 256, 128, 100 give roughly 160, 338, 950, 1800 ms.
fn scripted() -> (sizer_core::SystemUnderConfiguration, Vec<GroundTruthEntry>) {
    let suc = single(Domain::values([100, 128, 256, 512, 1024]));
    let b: f64 = (1650.0f64 / 800.0).ln() / 128.0;
    let a = 1650.0 * (128.0 * b).exp();
    (
        suc,
        vec![GroundTruthEntry::new("f", "*", ExpDecay::new(a, b, 150.0))],
    )
}

#[test]
fn prune_stops_after_first_violation() {
    let (suc, truth) = scripted();
    let p = SamplingPlan::new("f", vec![100, 128, 256, 512, 1024]).with_runs(5);
    let bound = Bound::new(QualityKind::ELat, Operator::Le, 1000.0);
    let mut sim = simulator(config(5, 0), suc.clone(), truth.clone());
    let pruned = monotonic_prune_sweep(
        &mut sim,
        &suc,
        &p,
        &bound,
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(pruned.visited, vec![1024, 512, 256, 128]);
    assert_eq!(pruned.omitted, vec![100]);
    assert!(
        (size_aggregate(&pruned.report.samples, 256, QualityKind::ELat).unwrap() - 950.0).abs()
            < 1e-6
    );
    assert!(
        (size_aggregate(&pruned.report.samples, 128, QualityKind::ELat).unwrap() - 1800.0).abs()
            < 1e-6
    );

    // Visited values match the full sweep.
    let mut full_sim = simulator(config(5, 0), suc.clone(), truth);
    let full = execute_plan(
        &mut full_sim,
        &suc,
        &p,
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    for size in &pruned.visited {
        let q = |r: &[sizer_core::Sample]| -> Vec<String> {
            r.iter()
                .filter(|s| s.memory_size() == *size)
                .map(|s| format!("{:?}", s.qualities))
                .collect()
        };
        assert_eq!(q(&pruned.report.samples), q(&full.samples));
    }
}

#[test]
fn prune_edge_cases() {
    let (suc, truth) = scripted();
    let p = SamplingPlan::new("f", vec![100, 128, 256, 512, 1024]).with_runs(5);
    let never = Bound::new(QualityKind::ELat, Operator::Le, 1e9);
    let mut sim = simulator(config(5, 0), suc.clone(), truth.clone());
    let r = monotonic_prune_sweep(
        &mut sim,
        &suc,
        &p,
        &never,
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert!(r.omitted.is_empty());
    assert_eq!(r.visited.len(), 5);

    let always = Bound::new(QualityKind::ELat, Operator::Le, 1.0);
    let mut sim = simulator(config(5, 0), suc.clone(), truth.clone());
    let r = monotonic_prune_sweep(
        &mut sim,
        &suc,
        &p,
        &always,
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(r.visited, vec![1024]);
    assert_eq!(r.omitted.len(), 4);

    // Cost sweeps upward from the smallest size.
    let cheap = Bound::new(QualityKind::ECost, Operator::Le, 0.0);
    let mut sim = simulator(config(5, 0), suc.clone(), truth.clone());
    let r = monotonic_prune_sweep(
        &mut sim,
        &suc,
        &p,
        &cheap,
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default(),
    )
    .unwrap();
    assert_eq!(r.visited, vec![100]);

    let tput = Bound::new(QualityKind::Throughput, Operator::Ge, 1.0);
    let mut sim = simulator(config(5, 0), suc.clone(), truth);
    assert!(matches!(
        monotonic_prune_sweep(
            &mut sim,
            &suc,
            &p,
            &tput,
            &TacticConfig::default(),
            &workload(),
            &ExperimentOptions::default()
        ),
        Err(Error::UnmeasuredQuality(QualityKind::Throughput))
    ));

    let manifold = p.clone().with_mode(SamplingMode::Manifold);
    let mut sim = simulator(config(5, 0), suc.clone(), vec![]);
    let _ = sim.now();
    assert!(monotonic_prune_sweep(
        &mut sim,
        &suc,
        &manifold,
        &never,
        &TacticConfig::default(),
        &workload(),
        &ExperimentOptions::default()
    )
    .is_err());
}
