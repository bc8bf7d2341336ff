#![allow(dead_code)]

use sizer_core::simulator::ConvergenceRange;
use sizer_core::{
    Domain, ExpDecay, FunctionSpec, GroundTruth, GroundTruthEntry, PlatformConfig, Simulator,
    SystemUnderConfiguration,
};

pub const CURVE: ExpDecay = ExpDecay::new(1000.0, 0.002, 200.0);

pub fn config(seed: u64, convergence: u64) -> PlatformConfig {
    PlatformConfig {
        deployment_convergence: ConvergenceRange {
            min: convergence,
            max: convergence,
        },
        rng_seed: seed,
        ..PlatformConfig::default()
    }
}

pub fn single(domain: Domain) -> SystemUnderConfiguration {
    SystemUnderConfiguration::single(FunctionSpec::with_memory("f", domain))
}

pub fn chain(n: usize, domain: Domain) -> SystemUnderConfiguration {
    let fns = (0..n)
        .map(|i| FunctionSpec::with_memory(format!("f{i}"), domain.clone()))
        .collect();
    SystemUnderConfiguration::chain("chain", fns)
}

pub fn simulator(
    cfg: PlatformConfig,
    suc: SystemUnderConfiguration,
    entries: Vec<GroundTruthEntry>,
) -> Simulator {
    Simulator::new(cfg, suc, GroundTruth::new(entries)).unwrap()
}
