use std::path::Path;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Method, Request, StatusCode};
use http_body_util::BodyExt;
use serde_json::{json, Value};
use sizer_core::modeling::{model_hash, ModelKey};
use sizer_core::simulator::ConvergenceRange;
use sizer_core::sizing::{SizingRequest, SizingResult};
use sizer_core::{
    json, Bound, Domain, ExpDecay, FunctionSpec, GoalSpec, GroundTruth, GroundTruthEntry, Operator,
    Platform, PlatformConfig, QualityKind, Simulator, SystemUnderConfiguration, WorkloadModel,
};
use sizer_service::{openapi, router, AppState, ServiceConfig};
use tower::ServiceExt;

fn suc() -> SystemUnderConfiguration {
    SystemUnderConfiguration::single(FunctionSpec::with_memory(
        "f",
        Domain::values((1..=16).map(|i| i * 128).collect::<Vec<u32>>()),
    ))
}

fn config(dir: &Path) -> ServiceConfig {
    ServiceConfig {
        model_dir: dir.to_path_buf(),
        suc: suc(),
        platform: PlatformConfig {
            deployment_convergence: ConvergenceRange {
                min: 1000,
                max: 1000,
            },
            ..PlatformConfig::default()
        },
        ground_truth: GroundTruth::new(vec![GroundTruthEntry::new(
            "f",
            "*",
            ExpDecay::new(1000.0, 0.002, 200.0),
        )
        .with_noise(0.05)]),
    }
}

fn app(dir: &Path) -> axum::Router {
    router(AppState::new(config(dir)).unwrap())
}

fn request_body(reuse: bool) -> Value {
    let mut r = SizingRequest::new(
        suc(),
        GoalSpec::weighted([(QualityKind::RLat, 0.5), (QualityKind::ECost, 0.5)]),
        WorkloadModel::single("default", 1.0),
    );
    r.suc = None;
    r.options.runs_per_size = 5;
    if reuse {
        r.tactics.reuse_model = Some("any".into());
    }
    serde_json::to_value(r).unwrap()
}

async fn call(
    app: &axum::Router,
    method: Method,
    uri: &str,
    body: Option<&Value>,
) -> (StatusCode, String) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(match body {
            Some(v) => Body::from(serde_json::to_vec(v).unwrap()),
            None => Body::empty(),
        })
        .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

/// Polls until the job leaves the 202 state.
async fn settle(app: &axum::Router, location: &str) -> (StatusCode, String) {
    for _ in 0..600 {
        let (s, b) = call(app, Method::GET, location, None).await;
        if s != StatusCode::ACCEPTED {
            return (s, b);
        }
        tokio::time::sleep(Duration::from_millis(20)).await;
    }
    panic!("job at {location} did not finish");
}

async fn size(app: &axum::Router, body: &Value) -> (StatusCode, String, String) {
    let (s, b) = call(app, Method::POST, "/api/sizings", Some(body)).await;
    if s == StatusCode::ACCEPTED {
        let v: Value = serde_json::from_str(&b).unwrap();
        let id = v["id"].as_str().unwrap().to_string();
        let (s, b) = settle(app, v["location"].as_str().unwrap()).await;
        return (s, b, id);
    }
    (s, b, String::new())
}

#[test]
fn openapi_document_is_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../docs/openapi.json");
    let expected = json::to_pretty(&openapi()).unwrap();
    if std::env::var_os("SIZER_UPDATE_DOCS").is_some() {
        std::fs::write(&path, &expected).unwrap();
    }
    let on_disk = std::fs::read_to_string(&path).expect("docs/openapi.json exists");
    assert_eq!(on_disk, expected, "regenerate with SIZER_UPDATE_DOCS=1");
}

#[tokio::test(flavor = "multi_thread")]
async fn weights_not_summing_to_one_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut body = request_body(false);
    body["goal"]["weights"] = json!({ "RLat": 0.6, "ECost": 0.5 });
    let (s, b) = call(&app, Method::POST, "/api/sizings", Some(&body)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    let v: Value = serde_json::from_str(&b).unwrap();
    assert_eq!(v["error"], "validation");
    assert!(!v["violations"].as_array().unwrap().is_empty());

    let (s, _) = call(
        &app,
        Method::POST,
        "/api/sizings",
        Some(&json!({ "goal": 1 })),
    )
    .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn sampling_sizing_is_polled_then_cached_sizing_is_synchronous() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, b, id) = size(&app, &request_body(false)).await;
    assert_eq!(s, StatusCode::OK, "{b}");
    assert!(!id.is_empty());
    let first: SizingResult = serde_json::from_str(&b).unwrap();
    assert_eq!(json::to_pretty(&first).unwrap(), b);

    let (s, b) = call(&app, Method::GET, &format!("/api/pareto?sizing={id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    let front: Vec<Value> = serde_json::from_str(&b).unwrap();
    assert!(!front.is_empty());
    let scores: Vec<f64> = front
        .iter()
        .map(|p| p["zf_score"].as_f64().unwrap())
        .collect();
    assert!(scores.windows(2).all(|w| w[0] <= w[1]));

    let (s, b) = call(
        &app,
        Method::POST,
        "/api/sizings",
        Some(&request_body(true)),
    )
    .await;
    assert_eq!(s, StatusCode::OK, "{b}");
    let cached: SizingResult = serde_json::from_str(&b).unwrap();
    assert_eq!(cached.policy, first.policy);

    let (s, b) = call(&app, Method::GET, "/api/models", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(serde_json::from_str::<Vec<Value>>(&b).unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_ids_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    for uri in [
        "/api/sizings/sz-0",
        "/api/experiments/ex-0",
        "/api/pareto?sizing=sz-0",
    ] {
        let (s, _) = call(&app, Method::GET, uri, None).await;
        assert_eq!(s, StatusCode::NOT_FOUND, "{uri}");
    }
    let (s, _) = call(&app, Method::GET, "/api/pareto", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn infeasible_goal_answers_422_with_the_nearest_miss() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let mut body = request_body(false);
    let bound = Bound::new(QualityKind::RLat, Operator::Le, 10.0);
    body["goal"]["bounds"] = json!([serde_json::to_value(bound).unwrap()]);
    let (s, b, _) = size(&app, &body).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{b}");
    let r: SizingResult = serde_json::from_str(&b).unwrap();
    assert!(!r.violated_bounds.is_empty());
}

#[tokio::test(flavor = "multi_thread")]
async fn responses_are_identical_across_restarts() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let (s1, body1, id1) = size(&app(a.path()), &request_body(false)).await;
    let (s2, body2, id2) = size(&app(b.path()), &request_body(false)).await;
    assert_eq!((s1, &id1), (s2, &id2));
    assert_eq!(body1, body2);
    let restarted = app(a.path());
    let (s3, body3) = call(
        &restarted,
        Method::GET,
        &format!("/api/sizings/{id1}"),
        None,
    )
    .await;
    assert_eq!(s3, StatusCode::OK);
    assert_eq!(body3, body1);
}

#[tokio::test(flavor = "multi_thread")]
async fn concurrent_model_write_is_a_conflict() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let sim = Simulator::new(
        cfg.platform.clone(),
        cfg.suc.clone(),
        cfg.ground_truth.clone(),
    )
    .unwrap();
    let key = ModelKey {
        suc_hash: model_hash(
            &cfg.suc.functions[0],
            &sim.code_digest("f").unwrap(),
            "default",
        ),
        function: "f".into(),
        workload_class: "default".into(),
    };
    std::fs::create_dir_all(dir.path()).unwrap();
    let lock = dir.path().join(key.file_name()).with_extension("json.lock");
    std::fs::write(&lock, "").unwrap();
    let (s, b, _) = size(&app(dir.path()), &request_body(false)).await;
    assert_eq!(s, StatusCode::CONFLICT, "{b}");
}

#[tokio::test(flavor = "multi_thread")]
async fn experiments_run_in_the_background() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let body = json!({
        "plan": { "function": "f", "sizes": [128, 1024, 2048], "runs_per_size": 4 },
        "workload": serde_json::to_value(WorkloadModel::single("default", 1.0)).unwrap()
    });
    let (s, b) = call(&app, Method::POST, "/api/experiments", Some(&body)).await;
    assert_eq!(s, StatusCode::ACCEPTED, "{b}");
    let v: Value = serde_json::from_str(&b).unwrap();
    let (s, b) = settle(&app, v["location"].as_str().unwrap()).await;
    assert_eq!(s, StatusCode::OK, "{b}");
    let report: Value = serde_json::from_str(&b).unwrap();
    assert_eq!(report["samples"].as_array().unwrap().len(), 12);

    let mut bad = body.clone();
    bad["plan"]["sizes"] = json!([100]);
    let (s, _) = call(&app, Method::POST, "/api/experiments", Some(&bad)).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test(flavor = "multi_thread")]
async fn registered_suc_is_served() {
    let dir = tempfile::tempdir().unwrap();
    let (s, b) = call(&app(dir.path()), Method::GET, "/api/suc", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b, json::to_pretty(&suc()).unwrap());
}
