use std::path::PathBuf;

use thiserror::Error;

use crate::quality::QualityKind;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// One or more structural violations, all reported together.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("unknown knob kind `{0}`")]
    UnknownKnob(String),

    #[error("cap exceeded: {size} policies exceed the enumeration cap of {cap}")]
    CapExceeded { size: u128, cap: u128 },

    #[error("unknown function `{0}`")]
    UnknownFunction(String),

    #[error("unknown workload class `{0}`")]
    UnknownWorkloadClass(String),

    #[error("unknown deployment {0}")]
    UnknownDeployment(u64),

    #[error("time travel: requested t={requested} ms but the platform clock is at {clock} ms")]
    TimeTravel { requested: u64, clock: u64 },

    #[error("deployment {id} is not ready before t={ready_at} ms")]
    NotReady { id: u64, ready_at: u64 },

    #[error(
        "manifold exceeded concurrency limit: {throttled} of {total} requests throttled \
         (rate {rate:.4} > threshold {threshold:.4}, max_concurrent_executions={limit})"
    )]
    ThrottleLimit {
        throttled: usize,
        total: usize,
        rate: f64,
        threshold: f64,
        limit: u32,
    },

    #[error("insufficient distinct sizes: got {0}, need at least 3")]
    InsufficientSizes(usize),

    #[error("quality {0} is not measured or predicted")]
    UnmeasuredQuality(QualityKind),

    #[error("requested quality {0} has no model component")]
    NoModelComponent(QualityKind),

    #[error("model not found: {0}")]
    ModelNotFound(String),

    #[error("concurrent write to model `{0}`")]
    ConcurrentWrite(String),

    #[error("empty request set")]
    EmptyRequestSet,

    #[error("no feasible policy")]
    NoFeasiblePolicy,

    #[error("missing telemetry: {0}")]
    MissingTelemetry(String),

    #[error("invalid argument: {0}")]
    Invalid(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// One line per problem; validation errors keep their individual entries.
    pub fn diagnostics(&self) -> Vec<String> {
        match self {
            Error::Validation(v) => v.clone(),
            other => vec![other.to_string()],
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Invalid(_)
                | Error::UnknownKnob(_)
                | Error::UnknownFunction(_)
                | Error::UnknownWorkloadClass(_)
                | Error::InsufficientSizes(_)
                | Error::UnmeasuredQuality(_)
                | Error::NoModelComponent(_)
                | Error::EmptyRequestSet
                | Error::Json(_)
        )
    }
}
