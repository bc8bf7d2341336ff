//! The FaaS platform interface. The simulator is the only backend shipped;
//! cloud adapters would implement the same trait.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::policy::Policy;
use crate::sample::TelemetryRecord;
use crate::workload::Event;

pub type DeploymentId = u64;

/// Pricing and billing granularity of a platform.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostParams {
    pub price_per_gb_second: f64,
    pub price_per_invocation: f64,
    /// Billing quantum (ms).
    pub billing_quantum: u64,
}

impl CostParams {
    pub fn cost_of(&self, memory_size: u32, duration: f64) -> f64 {
        let billed = crate::sample::billed_duration(duration, self.billing_quantum);
        crate::sample::billed_cost(
            memory_size,
            billed,
            self.price_per_gb_second,
            self.price_per_invocation,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Deployment {
    pub id: DeploymentId,
    pub policy: Policy,
    pub created_at: u64,
    pub converged_at: u64,
    /// Policy served until `converged_at`, if this deployment replaced one.
    pub previous_policy: Option<Policy>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Response {
    pub ok: bool,
    /// Latency seen by the client (ms).
    pub client_latency: f64,
    pub finished_at: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Invocation {
    pub response: Response,
    pub telemetry: TelemetryRecord,
}

/// One end-to-end execution of the whole composition.
#[derive(Debug, Clone, PartialEq)]
pub struct CompositionRun {
    pub started_at: u64,
    pub finished_at: u64,
    /// End-to-end execution latency (ms).
    pub latency: f64,
    pub ok: bool,
    pub throttled: bool,
    pub telemetry: Vec<TelemetryRecord>,
}

pub trait Platform {
    /// Current virtual time (ms).
    fn now(&self) -> u64;

    /// Moves the clock forward; moving it backwards is an error.
    fn advance_to(&mut self, at: u64) -> Result<()>;

    fn cost_params(&self) -> CostParams;

    /// Fixed client-side overhead added on top of execution latency (ms).
    fn client_overhead(&self) -> f64;

    fn max_concurrent_executions(&self) -> u32;

    /// Digest identifying the deployed code of a function.
    fn code_digest(&self, function: &str) -> Result<String>;

    /// Creates an independent deployment of `policy` at virtual time `at`.
    fn deploy(&mut self, policy: &Policy, at: u64) -> Result<Deployment>;

    /// Reconfigures an existing deployment; the old policy keeps serving until convergence.
    fn update(&mut self, deployment: DeploymentId, policy: &Policy, at: u64) -> Result<Deployment>;

    fn teardown(&mut self, deployment: DeploymentId) -> Result<()>;

    fn invoke(
        &mut self,
        deployment: DeploymentId,
        function: &str,
        event: &Event,
        at: u64,
    ) -> Result<Invocation>;

    /// Runs the whole composition starting at `at`. The run is atomic: the
    /// platform clock ends at the run's finish time.
    fn invoke_composition(
        &mut self,
        deployment: DeploymentId,
        event: &Event,
        at: u64,
    ) -> Result<CompositionRun>;

    /// All telemetry recorded so far, in invocation order.
    fn telemetry(&self) -> &[TelemetryRecord];

    fn invocation_count(&self) -> u64 {
        self.telemetry().len() as u64
    }
}
