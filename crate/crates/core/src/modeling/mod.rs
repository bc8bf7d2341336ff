//! Quality models: the fitted latency curve plus analytic cost and
//! empirical reliability, persisted as plain JSON files.

mod fit;
mod model;
mod store;

pub use fit::{fit_exponential_decay, Fit, FitDiagnostics};
pub use model::{build_model, model_hash, ModelContext, QualityModel, LATENCY_SOURCE, PREDICTED};
pub use store::{
    get_or_build_model, ModelKey, ModelOutcome, ModelRequest, ModelStore, Provenance,
    DEFAULT_STALENESS,
};

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::experiment::{ExperimentReport, FunctionType};
use crate::platform::Platform;
use crate::sample::Sample;
use crate::suc::SystemUnderConfiguration;

/// Class id of a model pooled over every workload class.
pub const POOLED_CLASS: &str = "*";

/// Builds a model, falling back to a table of the sampled sizes when too
/// few sizes survive for a curve fit. The second value is a warning.
pub fn build_model_or_table(
    ctx: &ModelContext,
    samples: &[Sample],
) -> Result<(QualityModel, Option<String>)> {
    match build_model(ctx, samples) {
        Err(Error::InsufficientSizes(n)) if ctx.function_type == FunctionType::ExponentialDecay => {
            let table = ModelContext {
                function_type: FunctionType::None,
                ..ctx.clone()
            };
            let warning = format!(
                "`{}`/{}: only {n} usable sizes, using the sampled sizes without a curve",
                ctx.function, ctx.workload_class
            );
            Ok((build_model(&table, samples)?, Some(warning)))
        }
        other => other.map(|m| (m, None)),
    }
}

/// One model per workload class found in a per-function report, or a
/// single pooled model when the report's tactics leave classes unknown.
pub fn fit_report(
    report: &ExperimentReport,
    suc: &SystemUnderConfiguration,
    platform: &dyn Platform,
) -> Result<Vec<(QualityModel, Option<String>)>> {
    if report.plan.end_to_end {
        return Err(Error::Invalid(
            "end-to-end reports cannot be fitted per function".into(),
        ));
    }
    let function = suc
        .function(&report.plan.function)
        .ok_or_else(|| Error::UnknownFunction(report.plan.function.clone()))?;
    let digest = platform.code_digest(&function.name)?;
    let pooled = !report.tactics.workload_classes_known;
    let classes: BTreeSet<String> = if pooled {
        [POOLED_CLASS.to_string()].into()
    } else {
        report
            .samples
            .iter()
            .map(|s| s.workload_class.clone())
            .collect()
    };
    classes
        .into_iter()
        .map(|class| {
            let samples: Vec<Sample> = report
                .samples
                .iter()
                .filter(|s| pooled || s.workload_class == class)
                .cloned()
                .map(|mut s| {
                    s.workload_class = class.clone();
                    s
                })
                .collect();
            let ctx = ModelContext {
                function: function.name.clone(),
                workload_class: class.clone(),
                function_type: report.tactics.assume_function_type,
                cost_params: platform.cost_params(),
                client_overhead: platform.client_overhead(),
                created_at: platform.now(),
                suc_hash: model_hash(function, &digest, &class),
            };
            build_model_or_table(&ctx, &samples)
        })
        .collect()
}
