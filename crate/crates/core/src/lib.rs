//! Memory sizing for serverless functions.
//!
//! The crate samples a system under configuration through a [`Platform`]
//! (a deterministic simulator ships with it), fits per-function latency
//! models, and searches the memory configuration space for the policy that
//! best matches a weighted goal subject to quality bounds.

pub mod decay;
pub mod error;
pub mod evaluation;
pub mod experiment;
pub mod goal;
pub mod json;
pub mod modeling;
pub mod platform;
pub mod policy;
pub mod quality;
pub mod sample;
pub mod simulator;
pub mod sizing;
pub mod suc;
pub mod workload;

pub use decay::ExpDecay;
pub use error::{Error, Result};
pub use goal::{validate_goal, Bound, GoalSpec, Operator, ValidationResult};
pub use platform::{CostParams, Deployment, Platform};
pub use policy::{config_space_size, enumerate_policies, Policy, DEFAULT_ENUMERATION_CAP};
pub use quality::{Qualities, QualityKind, Unit};
pub use sample::{InvalidReason, Sample, TelemetryRecord};
pub use simulator::{GroundTruth, GroundTruthEntry, PlatformConfig, Simulator};
pub use suc::{
    CompositionNode, CompositionSpec, Domain, FunctionSpec, KnobKind, KnobSpec,
    SystemUnderConfiguration,
};
pub use workload::{Event, WorkloadModel};
