use serde::{Deserialize, Serialize};

use crate::decay::ExpDecay;
use crate::error::{Error, Result};
use crate::platform::CostParams;

fn one_u32() -> u32 {
    1
}

fn one_u64() -> u64 {
    1
}

fn default_colocation_noise() -> f64 {
    0.5
}

/// Uniform range the convergence delay of a deployment is drawn from (ms).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConvergenceRange {
    pub min: u64,
    pub max: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformConfig {
    pub max_concurrent_executions: u32,
    /// Executions a single slot hosts at once; 1 isolates executions.
    #[serde(default = "one_u32")]
    pub slot_concurrency: u32,
    /// A slot idle for longer than this (ms) is reclaimed.
    pub keep_alive: u64,
    pub deployment_convergence: ConvergenceRange,
    #[serde(default = "one_u64")]
    pub billing_quantum: u64,
    pub price_per_gb_second: f64,
    pub price_per_invocation: f64,
    pub rng_seed: u64,
    /// Network and client overhead added to the execution latency (ms).
    #[serde(default)]
    pub client_overhead: f64,
    /// Extra log-normal spread per co-located execution sharing a slot.
    #[serde(default = "default_colocation_noise")]
    pub colocation_noise: f64,
}

impl Default for PlatformConfig {
    fn default() -> Self {
        PlatformConfig {
            max_concurrent_executions: 1000,
            slot_concurrency: 1,
            keep_alive: 600_000,
            deployment_convergence: ConvergenceRange {
                min: 5_000,
                max: 5_000,
            },
            billing_quantum: 1,
            price_per_gb_second: 0.000_016_666_7,
            price_per_invocation: 0.000_000_2,
            rng_seed: 0,
            client_overhead: 0.0,
            colocation_noise: default_colocation_noise(),
        }
    }
}

impl PlatformConfig {
    pub fn cost_params(&self) -> CostParams {
        CostParams {
            price_per_gb_second: self.price_per_gb_second,
            price_per_invocation: self.price_per_invocation,
            billing_quantum: self.billing_quantum,
        }
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.slot_concurrency < 1 {
            out.push("slot_concurrency must be at least 1".into());
        }
        if self.deployment_convergence.max < self.deployment_convergence.min {
            out.push("deployment_convergence max < min".into());
        }
        if !(self.price_per_gb_second >= 0.0) || !(self.price_per_invocation >= 0.0) {
            out.push("prices must be non-negative".into());
        }
        if !(self.client_overhead >= 0.0) || !(self.colocation_noise >= 0.0) {
            out.push("client_overhead and colocation_noise must be non-negative".into());
        }
        if self.billing_quantum == 0 {
            out.push("billing_quantum must be at least 1 ms".into());
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

/// Hidden behaviour of one function under one workload class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruthEntry {
    pub function: String,
    /// Workload class id, or `*` for any class without a dedicated entry.
    pub workload_class: String,
    pub a: f64,
    pub b: f64,
    pub c: f64,
    /// Sigma of the multiplicative, median-preserving log-normal noise.
    #[serde(default)]
    pub noise_sigma: f64,
    /// Invocations below this size (MB) always fail.
    #[serde(default)]
    pub m_required: u32,
    #[serde(default)]
    pub base_failure_rate: f64,
    #[serde(default)]
    pub cold_start_extra: ExpDecay,
}

impl GroundTruthEntry {
    pub fn new(
        function: impl Into<String>,
        workload_class: impl Into<String>,
        curve: ExpDecay,
    ) -> Self {
        GroundTruthEntry {
            function: function.into(),
            workload_class: workload_class.into(),
            a: curve.a,
            b: curve.b,
            c: curve.c,
            noise_sigma: 0.0,
            m_required: 0,
            base_failure_rate: 0.0,
            cold_start_extra: ExpDecay::default(),
        }
    }

    pub fn curve(&self) -> ExpDecay {
        ExpDecay::new(self.a, self.b, self.c)
    }

    pub fn with_noise(mut self, sigma: f64) -> Self {
        self.noise_sigma = sigma;
        self
    }

    pub fn with_cold_start(mut self, extra: ExpDecay) -> Self {
        self.cold_start_extra = extra;
        self
    }

    pub fn with_failures(mut self, m_required: u32, base_failure_rate: f64) -> Self {
        self.m_required = m_required;
        self.base_failure_rate = base_failure_rate;
        self
    }

    /// Noise-free latency at size `m`.
    pub fn latency(&self, m: u32) -> f64 {
        self.curve().eval(m as f64)
    }

    /// Expected success fraction at size `m`.
    pub fn success_rate(&self, m: u32) -> f64 {
        if m < self.m_required {
            0.0
        } else {
            1.0 - self.base_failure_rate
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroundTruth {
    pub entries: Vec<GroundTruthEntry>,
}

impl GroundTruth {
    pub fn new(entries: Vec<GroundTruthEntry>) -> Self {
        GroundTruth { entries }
    }

    pub fn lookup(&self, function: &str, workload_class: &str) -> Result<&GroundTruthEntry> {
        self.entries
            .iter()
            .find(|e| e.function == function && e.workload_class == workload_class)
            .or_else(|| {
                self.entries
                    .iter()
                    .find(|e| e.function == function && e.workload_class == "*")
            })
            .ok_or_else(|| {
                if self.entries.iter().any(|e| e.function == function) {
                    Error::UnknownWorkloadClass(workload_class.to_string())
                } else {
                    Error::UnknownFunction(function.to_string())
                }
            })
    }

    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for e in &self.entries {
            if !e.curve().is_non_negative() || !e.cold_start_extra.is_non_negative() {
                out.push(format!(
                    "ground truth for `{}`/`{}` has negative decay parameters",
                    e.function, e.workload_class
                ));
            }
            if !(e.noise_sigma >= 0.0) {
                out.push(format!("negative noise_sigma for `{}`", e.function));
            }
            if !(0.0..=1.0).contains(&e.base_failure_rate) {
                out.push(format!(
                    "base_failure_rate of `{}` outside [0, 1]",
                    e.function
                ));
            }
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
