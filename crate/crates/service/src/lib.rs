//! HTTP API for the sizer.
//!
//! Sizings that reuse stored models answer synchronously; anything that has
//! to sample the platform runs as a background job and is polled. Results are
//! written under `<model-dir>/runs/` and served from there, so a restarted
//! service answers with the same bytes.

mod jobs;
mod openapi;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use sizer_core::experiment::{ExperimentReport, ExperimentRequest};
use sizer_core::modeling::ModelStore;
use sizer_core::sizing::{run_sizing, SizingRequest, SizingResult, SizingStatus};
use sizer_core::{json, Error, GroundTruth, PlatformConfig, Simulator, SystemUnderConfiguration};

pub use jobs::{ErrorBody, Job, JobKind, JobState, JobTable};
pub use openapi::openapi;

/// What the service sizes and where it keeps its artifacts.
#[derive(Debug, Clone)]
pub struct ServiceConfig {
    pub model_dir: PathBuf,
    pub suc: SystemUnderConfiguration,
    pub platform: PlatformConfig,
    pub ground_truth: GroundTruth,
}

struct Inner {
    cfg: ServiceConfig,
    store: ModelStore,
    runs: PathBuf,
    jobs: Mutex<JobTable>,
    /// Platform work runs one job at a time.
    runner: tokio::sync::Mutex<()>,
}

#[derive(Clone)]
pub struct AppState(Arc<Inner>);

/// Poll answer for a job that has not produced its artifact yet.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Accepted {
    pub id: String,
    pub status: JobState,
    pub location: String,
}

struct ApiError(StatusCode, ErrorBody);

impl ApiError {
    fn new(status: StatusCode, kind: &str, violations: Vec<String>) -> Self {
        ApiError(
            status,
            ErrorBody {
                error: kind.into(),
                violations,
            },
        )
    }

    fn not_found(what: &str) -> Self {
        ApiError::new(
            StatusCode::NOT_FOUND,
            "not_found",
            vec![format!("unknown {what}")],
        )
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, kind) = match &e {
            e if e.is_validation() => (StatusCode::BAD_REQUEST, "validation"),
            Error::ConcurrentWrite(_) => (StatusCode::CONFLICT, "conflict"),
            Error::ModelNotFound(_) => (StatusCode::NOT_FOUND, "not_found"),
            Error::NoFeasiblePolicy => (StatusCode::UNPROCESSABLE_ENTITY, "infeasible"),
            Error::CapExceeded { .. } | Error::ThrottleLimit { .. } => {
                (StatusCode::UNPROCESSABLE_ENTITY, "limit")
            }
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "platform"),
        };
        ApiError::new(status, kind, e.diagnostics())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        json_response(self.0, &self.1)
    }
}

type ApiResult = std::result::Result<Response, ApiError>;

fn json_response<T: Serialize>(status: StatusCode, body: &T) -> Response {
    match json::to_pretty(body) {
        Ok(text) => (status, [(header::CONTENT_TYPE, "application/json")], text).into_response(),
        Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
    }
}

fn result_status(r: &SizingResult) -> StatusCode {
    if r.status == SizingStatus::Infeasible {
        StatusCode::UNPROCESSABLE_ENTITY
    } else {
        StatusCode::OK
    }
}

fn with_location(mut resp: Response, location: &str) -> Response {
    if let Ok(v) = HeaderValue::from_str(location) {
        resp.headers_mut().insert(header::LOCATION, v);
    }
    resp
}

fn parse<T: serde::de::DeserializeOwned>(body: &Bytes) -> std::result::Result<T, ApiError> {
    serde_json::from_slice(body)
        .map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "validation", vec![e.to_string()]))
}

impl AppState {
    pub fn new(cfg: ServiceConfig) -> sizer_core::Result<Self> {
        cfg.suc.validate()?;
        cfg.platform.validate()?;
        cfg.ground_truth.validate()?;
        let runs = cfg.model_dir.join("runs");
        let jobs = JobTable::load(&runs.join("jobs.json"))?;
        Ok(AppState(Arc::new(Inner {
            store: ModelStore::new(&cfg.model_dir),
            cfg,
            runs,
            jobs: Mutex::new(jobs),
            runner: tokio::sync::Mutex::new(()),
        })))
    }

    fn artifact(&self, kind: JobKind, id: &str) -> PathBuf {
        let sub = match kind {
            JobKind::Sizing => "sizings",
            JobKind::Experiment => "experiments",
        };
        self.0.runs.join(sub).join(format!("{id}.json"))
    }

    fn simulator(
        &self,
        suc: &SystemUnderConfiguration,
        seed: u64,
    ) -> sizer_core::Result<Simulator> {
        let cfg = PlatformConfig {
            rng_seed: seed,
            ..self.0.cfg.platform.clone()
        };
        Simulator::new(cfg, suc.clone(), self.0.cfg.ground_truth.clone())
    }

    fn job(&self, id: &str) -> Option<Job> {
        self.0.jobs.lock().expect("job table lock").get(id).cloned()
    }

    fn record(&self, job: Job) {
        if let Err(e) = self.0.jobs.lock().expect("job table lock").put(job) {
            log::error!("persisting job table: {e}");
        }
    }

    /// Runs `work` in the background and stores its artifact under `id`.
    fn spawn<T, F>(&self, kind: JobKind, id: String, work: F)
    where
        T: Serialize + Send + 'static,
        F: FnOnce(&AppState) -> sizer_core::Result<T> + Send + 'static,
    {
        self.record(Job {
            id: id.clone(),
            kind,
            status: JobState::Running,
            error: None,
            error_status: None,
        });
        let state = self.clone();
        tokio::spawn(async move {
            let _guard = state.0.runner.lock().await;
            let worker = state.clone();
            let path = state.artifact(kind, &id);
            let outcome = tokio::task::spawn_blocking(move || {
                let value = work(&worker)?;
                json::write(&path, &value)
            })
            .await;
            let failure = match outcome {
                Ok(Ok(())) => None,
                Ok(Err(e)) => Some(ApiError::from(e)),
                Err(e) => Some(ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "platform",
                    vec![e.to_string()],
                )),
            };
            state.record(Job {
                id,
                kind,
                status: if failure.is_some() {
                    JobState::Failed
                } else {
                    JobState::Done
                },
                error_status: failure.as_ref().map(|f| f.0.as_u16()),
                error: failure.map(|f| f.1),
            });
        });
    }

    /// A stored artifact, the job's progress, or 404.
    fn poll<T: serde::de::DeserializeOwned>(
        &self,
        kind: JobKind,
        id: &str,
        location: &str,
    ) -> std::result::Result<Result<T, Response>, ApiError> {
        let path = self.artifact(kind, id);
        if path.exists() {
            return Ok(Ok(json::read(&path)?));
        }
        match self.job(id) {
            Some(j) if j.kind == kind => match j.status {
                JobState::Failed => {
                    let status = j
                        .error_status
                        .and_then(|s| StatusCode::from_u16(s).ok())
                        .unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
                    let body = j.error.unwrap_or(ErrorBody {
                        error: "platform".into(),
                        violations: Vec::new(),
                    });
                    Err(ApiError(status, body))
                }
                status => Ok(Err(with_location(
                    json_response(
                        StatusCode::ACCEPTED,
                        &Accepted {
                            id: id.into(),
                            status,
                            location: location.into(),
                        },
                    ),
                    location,
                ))),
            },
            _ => Err(ApiError::not_found(match kind {
                JobKind::Sizing => "sizing",
                JobKind::Experiment => "experiment",
            })),
        }
    }
}

/// Deterministic id of a request: same body, same id.
fn request_id<T: Serialize>(prefix: &str, value: &T) -> String {
    format!("{prefix}-{}", &json::fingerprint(value)[..16])
}

async fn post_sizing(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let request: SizingRequest = parse(&body)?;
    request.validate()?;
    let id = request_id("sz", &request);
    let location = format!("/api/sizings/{id}");
    if let Ok(Ok(done)) = state.poll::<SizingResult>(JobKind::Sizing, &id, &location) {
        return Ok(with_location(
            json_response(result_status(&done), &done),
            &location,
        ));
    }
    if state
        .job(&id)
        .is_some_and(|j| j.status == JobState::Running)
    {
        return Ok(state
            .poll::<SizingResult>(JobKind::Sizing, &id, &location)?
            .unwrap_err());
    }
    let suc = request
        .suc
        .clone()
        .unwrap_or_else(|| state.0.cfg.suc.clone());
    let model_backed = request.tactics.reuse_model.is_some();
    let work = move |s: &AppState| -> sizer_core::Result<SizingResult> {
        let mut sim = s.simulator(&suc, request.options.seed)?;
        Ok(run_sizing(&request, &suc, &mut sim, &s.0.store)?.result)
    };
    if model_backed {
        let _guard = state.0.runner.lock().await;
        let worker = state.clone();
        let result = tokio::task::spawn_blocking(move || work(&worker))
            .await
            .map_err(|e| {
                ApiError::new(
                    StatusCode::INTERNAL_SERVER_ERROR,
                    "platform",
                    vec![e.to_string()],
                )
            })??;
        json::write(state.artifact(JobKind::Sizing, &id), &result)?;
        return Ok(with_location(
            json_response(result_status(&result), &result),
            &location,
        ));
    }
    state.spawn(JobKind::Sizing, id.clone(), work);
    Ok(with_location(
        json_response(
            StatusCode::ACCEPTED,
            &Accepted {
                id,
                status: JobState::Running,
                location: location.clone(),
            },
        ),
        &location,
    ))
}

async fn get_sizing(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let location = format!("/api/sizings/{id}");
    Ok(
        match state.poll::<SizingResult>(JobKind::Sizing, &id, &location)? {
            Ok(r) => json_response(result_status(&r), &r),
            Err(pending) => pending,
        },
    )
}

async fn post_experiment(State(state): State<AppState>, body: Bytes) -> ApiResult {
    let request: ExperimentRequest = parse(&body)?;
    let suc = state.0.cfg.suc.clone();
    let v = request.violations(&suc);
    if !v.is_empty() {
        return Err(Error::Validation(v).into());
    }
    let id = request_id("ex", &request);
    let location = format!("/api/experiments/{id}");
    let status = if state.artifact(JobKind::Experiment, &id).exists() {
        Some(JobState::Done)
    } else {
        state
            .job(&id)
            .map(|j| j.status)
            .filter(|&s| s == JobState::Running)
    };
    if status.is_none() {
        state.spawn(JobKind::Experiment, id.clone(), move |s: &AppState| {
            let mut sim = s.simulator(&suc, request.options.seed)?;
            request.run(&mut sim, &suc)
        });
    }
    Ok(with_location(
        json_response(
            StatusCode::ACCEPTED,
            &Accepted {
                id,
                status: status.unwrap_or(JobState::Running),
                location: location.clone(),
            },
        ),
        &location,
    ))
}

async fn get_experiment(State(state): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let location = format!("/api/experiments/{id}");
    Ok(
        match state.poll::<ExperimentReport>(JobKind::Experiment, &id, &location)? {
            Ok(r) => json_response(StatusCode::OK, &r),
            Err(pending) => pending,
        },
    )
}

async fn get_models(State(state): State<AppState>) -> ApiResult {
    Ok(json_response(StatusCode::OK, &state.0.store.list()?))
}

#[derive(Deserialize)]
struct ParetoQuery {
    sizing: Option<String>,
}

async fn get_pareto(State(state): State<AppState>, Query(q): Query<ParetoQuery>) -> ApiResult {
    let id = q.sizing.ok_or_else(|| {
        ApiError::new(
            StatusCode::BAD_REQUEST,
            "validation",
            vec!["missing query parameter `sizing`".into()],
        )
    })?;
    let location = format!("/api/sizings/{id}");
    Ok(
        match state.poll::<SizingResult>(JobKind::Sizing, &id, &location)? {
            Ok(r) => json_response(StatusCode::OK, &r.pareto_front),
            Err(pending) => pending,
        },
    )
}

async fn get_suc(State(state): State<AppState>) -> ApiResult {
    Ok(json_response(StatusCode::OK, &state.0.cfg.suc))
}

async fn get_openapi() -> Response {
    json_response(StatusCode::OK, &openapi())
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/sizings", post(post_sizing))
        .route("/api/sizings/{id}", get(get_sizing))
        .route("/api/experiments", post(post_experiment))
        .route("/api/experiments/{id}", get(get_experiment))
        .route("/api/models", get(get_models))
        .route("/api/pareto", get(get_pareto))
        .route("/api/suc", get(get_suc))
        .route("/api/openapi.json", get(get_openapi))
        .with_state(state)
}

/// Serves until the process is stopped.
pub async fn serve(cfg: ServiceConfig, addr: SocketAddr) -> std::io::Result<()> {
    let state = AppState::new(cfg).map_err(std::io::Error::other)?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(state)).await
}

/// Blocking entry point for the command line.
pub fn serve_blocking(cfg: ServiceConfig, port: u16) -> std::io::Result<()> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()?
        .block_on(serve(cfg, SocketAddr::from(([127, 0, 0, 1], port))))
}

/// Directory where the service keeps jobs and results for `model_dir`.
pub fn runs_dir(model_dir: &Path) -> PathBuf {
    model_dir.join("runs")
}
