use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::decay::ExpDecay;
use crate::error::{Error, Result};
use crate::experiment::FunctionType;
use crate::platform::CostParams;
use crate::quality::{Qualities, QualityKind};
use crate::sample::Sample;
use crate::suc::{Domain, FunctionSpec};

use super::fit::{fit_exponential_decay, FitDiagnostics};

/// Which latency feeds the curve and how client latency is derived.
pub const LATENCY_SOURCE: &str = "ELat from platform telemetry; RLat = ELat + client_overhead";

/// Quality model of one function under one workload class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QualityModel {
    pub function: String,
    pub workload_class: String,
    /// Fitted curve; absent when no function type is assumed.
    pub latency_params: Option<ExpDecay>,
    pub fit_diagnostics: Option<FitDiagnostics>,
    /// Mean valid ELat per sampled size (ms).
    pub latency_table: BTreeMap<u32, f64>,
    pub latency_source: String,
    pub client_overhead: f64,
    pub cost_params: CostParams,
    /// Success fraction per sampled size.
    pub reliability_table: BTreeMap<u32, f64>,
    pub created_at: u64,
    /// Fingerprint of the input samples.
    pub source_hash: String,
    /// Fingerprint of the function spec, its code and the workload class.
    pub suc_hash: String,
}

/// Cache key identity of a function model.
pub fn model_hash(function: &FunctionSpec, code_digest: &str, workload_class: &str) -> String {
    crate::json::fingerprint(&(function, code_digest, workload_class))
}

impl QualityModel {
    /// Sizes of `domain` the model can predict.
    pub fn supported_sizes(&self, domain: &Domain) -> Vec<u32> {
        match self.latency_params {
            Some(_) => domain.iter().collect(),
            None => self
                .latency_table
                .keys()
                .copied()
                .filter(|&m| domain.contains(m))
                .collect(),
        }
    }

    pub fn elat(&self, size: u32) -> Result<f64> {
        match self.latency_params {
            Some(p) => Ok(p.eval(size as f64)),
            None => self.latency_table.get(&size).copied().ok_or_else(|| {
                Error::Invalid(format!(
                    "model of `{}` has no curve and size {size} was not sampled",
                    self.function
                ))
            }),
        }
    }

    /// Success fraction of the nearest sampled size, ties to the smaller.
    pub fn reliability(&self, size: u32) -> f64 {
        self.reliability_table
            .iter()
            .min_by_key(|(&m, _)| (m.abs_diff(size), m))
            .map(|(_, &r)| r)
            .unwrap_or(1.0)
    }

    pub fn predict(&self, size: u32, qualities: &[QualityKind]) -> Result<Qualities> {
        let mut out = Qualities::new();
        for &q in qualities {
            let v = match q {
                QualityKind::ELat => self.elat(size)?,
                QualityKind::RLat => self.elat(size)? + self.client_overhead,
                QualityKind::ECost => self.cost_params.cost_of(size, self.elat(size)?),
                QualityKind::Reliability => self.reliability(size),
                QualityKind::Throughput => return Err(Error::NoModelComponent(q)),
            };
            out.insert(q, v);
        }
        Ok(out)
    }
}

/// Qualities every model can predict.
pub const PREDICTED: [QualityKind; 4] = [
    QualityKind::RLat,
    QualityKind::ELat,
    QualityKind::ECost,
    QualityKind::Reliability,
];

/// Inputs to [`build_model`] besides the samples.
#[derive(Debug, Clone)]
pub struct ModelContext {
    pub function: String,
    pub workload_class: String,
    pub function_type: FunctionType,
    pub cost_params: CostParams,
    pub client_overhead: f64,
    pub created_at: u64,
    pub suc_hash: String,
}

/// Builds a model from the samples of one function and class. Latency uses
/// valid samples only; reliability counts every sample.
pub fn build_model(ctx: &ModelContext, samples: &[Sample]) -> Result<QualityModel> {
    let relevant: Vec<&Sample> = samples
        .iter()
        .filter(|s| s.function == ctx.function && s.workload_class == ctx.workload_class)
        .collect();
    if relevant.is_empty() {
        return Err(Error::MissingTelemetry(format!(
            "no samples for `{}` under class `{}`",
            ctx.function, ctx.workload_class
        )));
    }
    let points: Vec<(u32, f64)> = relevant
        .iter()
        .filter(|s| s.valid)
        .filter_map(|s| Some((s.memory_size(), s.quality(QualityKind::ELat)?)))
        .collect();

    let mut sums: BTreeMap<u32, (f64, usize)> = BTreeMap::new();
    for &(m, y) in &points {
        let e = sums.entry(m).or_default();
        e.0 += y;
        e.1 += 1;
    }
    let latency_table = sums
        .into_iter()
        .map(|(m, (s, k))| (m, s / k as f64))
        .collect();

    let mut counts: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for s in &relevant {
        let e = counts.entry(s.memory_size()).or_default();
        e.0 += usize::from(s.succeeded());
        e.1 += 1;
    }
    let reliability_table = counts
        .into_iter()
        .map(|(m, (ok, n))| (m, ok as f64 / n as f64))
        .collect();

    let (latency_params, fit_diagnostics) = match ctx.function_type {
        FunctionType::ExponentialDecay => {
            let fit = fit_exponential_decay(&points)?;
            (Some(fit.params), Some(fit.diagnostics))
        }
        FunctionType::None => (None, None),
    };

    Ok(QualityModel {
        function: ctx.function.clone(),
        workload_class: ctx.workload_class.clone(),
        latency_params,
        fit_diagnostics,
        latency_table,
        latency_source: LATENCY_SOURCE.into(),
        client_overhead: ctx.client_overhead,
        cost_params: ctx.cost_params,
        reliability_table,
        created_at: ctx.created_at,
        source_hash: crate::json::fingerprint(&relevant),
        suc_hash: ctx.suc_hash.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    pub(crate) fn model(params: ExpDecay, price: f64) -> QualityModel {
        QualityModel {
            function: "f".into(),
            workload_class: "default".into(),
            latency_params: Some(params),
            fit_diagnostics: None,
            latency_table: BTreeMap::new(),
            latency_source: LATENCY_SOURCE.into(),
            client_overhead: 25.0,
            cost_params: CostParams {
                price_per_gb_second: price,
                price_per_invocation: 0.0,
                billing_quantum: 1,
            },
            reliability_table: BTreeMap::new(),
            created_at: 0,
            source_hash: String::new(),
            suc_hash: String::new(),
        }
    }

    #[test]
    fn prediction_at_1024() {
        let m = model(ExpDecay::new(1000.0, 0.002, 200.0), 0.2);
        let q = m.predict(1024, &PREDICTED).unwrap();
        assert!((q[&QualityKind::ELat] - 328.9934).abs() < 1e-3);
        assert!((q[&QualityKind::ECost] - 0.0658).abs() < 1e-12);
        assert_eq!(q[&QualityKind::RLat], q[&QualityKind::ELat] + 25.0);
        assert_eq!(q[&QualityKind::Reliability], 1.0);
    }

    #[test]
    fn asymptote_and_degenerate_decay() {
        let m = model(ExpDecay::new(1000.0, 0.002, 200.0), 0.2);
        assert!((m.elat(u32::MAX).unwrap() - 200.0).abs() < 1e-9);
        let flat = model(ExpDecay::new(1000.0, 0.0, 200.0), 0.2);
        for s in [128, 1024, 10240] {
            assert_eq!(flat.elat(s).unwrap(), 1200.0);
        }
    }

    #[test]
    fn throughput_has_no_component() {
        let m = model(ExpDecay::new(1000.0, 0.002, 200.0), 0.2);
        assert!(matches!(
            m.predict(512, &[QualityKind::Throughput]),
            Err(Error::NoModelComponent(QualityKind::Throughput))
        ));
    }

    #[test]
    fn reliability_uses_nearest_bucket() {
        let mut m = model(ExpDecay::new(1000.0, 0.002, 200.0), 0.2);
        m.reliability_table = BTreeMap::from([(128, 0.5), (512, 1.0)]);
        assert_eq!(m.reliability(128), 0.5);
        assert_eq!(m.reliability(300), 0.5);
        assert_eq!(m.reliability(320), 0.5);
        assert_eq!(m.reliability(321), 1.0);
        assert_eq!(m.reliability(4096), 1.0);
    }

    #[test]
    fn table_models_only_cover_sampled_sizes() {
        let mut m = model(ExpDecay::default(), 0.2);
        m.latency_params = None;
        m.latency_table = BTreeMap::from([(128, 900.0), (1024, 300.0)]);
        let d = Domain::values([128, 256, 1024]);
        assert_eq!(m.supported_sizes(&d), vec![128, 1024]);
        assert_eq!(m.elat(1024).unwrap(), 300.0);
        assert!(m.elat(256).is_err());
    }

    proptest! {
        #[test]
        fn predicted_latency_is_non_increasing(
            a in 0.0f64..5000.0, b in 1e-6f64..1e-1, c in 0.0f64..1000.0,
            m in 128u32..10240, d in 1u32..1000,
        ) {
            let model = model(ExpDecay::new(a, b, c), 0.2);
            prop_assert!(model.elat(m + d).unwrap() <= model.elat(m).unwrap());
        }
    }
}
