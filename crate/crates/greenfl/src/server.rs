//! HTTP API over the shared core. Scenarios and finished runs are persisted
//! as JSON lines under the data directory; validation runs execute on a
//! bounded pool and are polled through `GET /runs/{id}`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use anyhow::Context;
use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::{Deserialize, Serialize};
use tokio::sync::Semaphore;

use greenfl_core::jsonl::JsonlStore;
use greenfl_core::recommender::{recommend, Method};
use greenfl_core::reducer::ReducerModel;
use greenfl_core::scenario::{load_model, ScenarioConfig, ScenarioError};
use greenfl_core::telemetry::{default_ledger_path, EmissionsLedger};
use greenfl_core::validation::{validate, ValidationReport};

use crate::output::to_json;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredScenario {
    pub id: String,
    pub created_at: String,
    pub config: ScenarioConfig,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Queued,
    Running,
    Completed,
    Failed,
}

impl RunStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, RunStatus::Completed | RunStatus::Failed)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredRun {
    pub run_id: String,
    pub scenario_id: String,
    pub status: RunStatus,
    pub methods: Vec<Method>,
    pub reps: usize,
    pub created_at: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub finished_at: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<ValidationReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct AppState {
    data_dir: PathBuf,
    model: Option<Arc<ReducerModel>>,
    scenarios: Mutex<BTreeMap<String, StoredScenario>>,
    scenario_store: JsonlStore<StoredScenario>,
    runs: Mutex<BTreeMap<String, StoredRun>>,
    run_store: JsonlStore<StoredRun>,
    ledger: Arc<EmissionsLedger>,
    workers: Arc<Semaphore>,
}

fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl AppState {
    /// Opens (or creates) the stores under `data_dir` and reloads persisted
    /// scenarios and finished runs.
    pub fn open(data_dir: &Path, model: Option<ReducerModel>, workers: usize) -> anyhow::Result<Self> {
        std::fs::create_dir_all(data_dir).with_context(|| format!("cannot create {}", data_dir.display()))?;
        let scenario_store = JsonlStore::open(data_dir.join("scenarios.jsonl"))?;
        let run_store = JsonlStore::open(data_dir.join("runs.jsonl"))?;
        let scenarios = scenario_store.read_all()?.into_iter().map(|s: StoredScenario| (s.id.clone(), s)).collect();
        let runs = run_store.read_all()?.into_iter().map(|r: StoredRun| (r.run_id.clone(), r)).collect();
        Ok(AppState {
            data_dir: data_dir.to_path_buf(),
            model: model.map(Arc::new),
            scenarios: Mutex::new(scenarios),
            scenario_store,
            runs: Mutex::new(runs),
            run_store,
            ledger: Arc::new(EmissionsLedger::open(default_ledger_path(data_dir))?),
            workers: Arc::new(Semaphore::new(workers.max(1))),
        })
    }

    fn scenario(&self, id: &str) -> Result<StoredScenario, ApiError> {
        self.scenarios
            .lock()
            .expect("scenario lock")
            .get(id)
            .cloned()
            .ok_or_else(|| ApiError::not_found(format!("unknown scenario {id}")))
    }

    fn model_for(&self, cfg: &ScenarioConfig) -> Result<Arc<ReducerModel>, ApiError> {
        match (&cfg.reducer_model, &self.model) {
            (Some(p), _) => load_model(Path::new(p)).map(Arc::new).map_err(ApiError::from),
            (None, Some(m)) => Ok(m.clone()),
            (None, None) => Err(ApiError::bad_request("no reducer model configured for this scenario")),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn bad_request(m: impl Into<String>) -> Self {
        ApiError { status: StatusCode::BAD_REQUEST, message: m.into() }
    }
    fn not_found(m: impl Into<String>) -> Self {
        ApiError { status: StatusCode::NOT_FOUND, message: m.into() }
    }
    fn conflict(m: impl Into<String>) -> Self {
        ApiError { status: StatusCode::CONFLICT, message: m.into() }
    }
    fn internal(m: impl Into<String>) -> Self {
        ApiError { status: StatusCode::INTERNAL_SERVER_ERROR, message: m.into() }
    }
}

impl From<ScenarioError> for ApiError {
    fn from(e: ScenarioError) -> Self {
        if e.is_user_error() {
            ApiError::bad_request(e.to_string())
        } else {
            ApiError::internal(e.to_string())
        }
    }
}

impl From<greenfl_core::recommender::RecommenderError> for ApiError {
    fn from(e: greenfl_core::recommender::RecommenderError) -> Self {
        ApiError::bad_request(e.to_string())
    }
}

impl From<greenfl_core::jsonl::StoreError> for ApiError {
    fn from(e: greenfl_core::jsonl::StoreError) -> Self {
        ApiError::internal(e.to_string())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, json_body(&serde_json::json!({ "error": self.message }))).into_response()
    }
}

fn json_body<T: Serialize>(value: &T) -> ([(header::HeaderName, &'static str); 1], String) {
    ([(header::CONTENT_TYPE, "application/json")], to_json(value))
}

type ApiResult = Result<Response, ApiError>;

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/scenarios", post(create_scenario))
        .route("/scenarios/{id}", get(get_scenario))
        .route("/scenarios/{id}/recommend", post(recommend_scenario))
        .route("/scenarios/{id}/validate", post(start_validation))
        .route("/runs/{id}", get(get_run))
        .route("/ledger", get(get_ledger))
        .with_state(state)
}

#[derive(Debug, Deserialize)]
struct IdQuery {
    id: Option<String>,
}

async fn create_scenario(State(st): State<Arc<AppState>>, Query(q): Query<IdQuery>, body: Bytes) -> ApiResult {
    let text = std::str::from_utf8(&body).map_err(|e| ApiError::bad_request(e.to_string()))?;
    let mut config = ScenarioConfig::from_json(text)?;
    config.resolve_paths(&st.data_dir);
    config.validate()?;
    let id = q.id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    if id.is_empty() {
        return Err(ApiError::bad_request("empty scenario id"));
    }
    let stored = StoredScenario { id: id.clone(), created_at: now(), config };
    {
        let mut map = st.scenarios.lock().expect("scenario lock");
        if map.contains_key(&id) {
            return Err(ApiError::conflict(format!("scenario {id} already exists")));
        }
        st.scenario_store.append(&stored)?;
        map.insert(id.clone(), stored);
    }
    Ok((StatusCode::CREATED, json_body(&serde_json::json!({ "id": id }))).into_response())
}

async fn get_scenario(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    Ok(json_body(&st.scenario(&id)?).into_response())
}

async fn recommend_scenario(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let stored = st.scenario(&id)?;
    let model = st.model_for(&stored.config)?;
    let set = tokio::task::spawn_blocking(move || -> Result<_, ApiError> {
        let m = stored.config.materialize()?;
        Ok(recommend(&m.recommend_input(), &model)?)
    })
    .await
    .map_err(|e| ApiError::internal(e.to_string()))??;
    Ok(json_body(&set).into_response())
}

#[derive(Debug, Deserialize)]
struct ValidateQuery {
    reps: Option<usize>,
    methods: Option<String>,
    run_id: Option<String>,
}

async fn start_validation(
    State(st): State<Arc<AppState>>,
    UrlPath(id): UrlPath<String>,
    Query(q): Query<ValidateQuery>,
) -> ApiResult {
    let stored = st.scenario(&id)?;
    let reps = q.reps.unwrap_or(8);
    if reps == 0 {
        return Err(ApiError::bad_request("reps must be positive"));
    }
    let methods: Vec<Method> = match &q.methods {
        None => Method::ALL.to_vec(),
        Some(s) => s.split(',').map(str::parse).collect::<Result<_, _>>()?,
    };
    let model = st.model_for(&stored.config)?;
    let run_id = q.run_id.unwrap_or_else(|| uuid::Uuid::new_v4().to_string());
    let run = StoredRun {
        run_id: run_id.clone(),
        scenario_id: id,
        status: RunStatus::Queued,
        methods: methods.clone(),
        reps,
        created_at: now(),
        finished_at: None,
        report: None,
        error: None,
    };
    {
        let mut runs = st.runs.lock().expect("run lock");
        if runs.contains_key(&run_id) {
            return Err(ApiError::conflict(format!("run {run_id} already exists")));
        }
        runs.insert(run_id.clone(), run);
    }

    let state = st.clone();
    let rid = run_id.clone();
    tokio::spawn(async move {
        let _permit = state.workers.clone().acquire_owned().await.expect("semaphore open");
        set_status(&state, &rid, RunStatus::Running);
        let ledger = state.ledger.clone();
        let config = stored.config;
        let outcome = tokio::task::spawn_blocking(move || -> Result<ValidationReport, String> {
            let m = config.materialize().map_err(|e| e.to_string())?;
            validate(&m, &model, &methods, reps, Some(&ledger)).map_err(|e| e.to_string())
        })
        .await
        .unwrap_or_else(|e| Err(e.to_string()));
        finish(&state, &rid, outcome);
    });
    Ok((StatusCode::ACCEPTED, json_body(&serde_json::json!({ "run_id": run_id }))).into_response())
}

fn set_status(st: &AppState, run_id: &str, status: RunStatus) {
    if let Some(r) = st.runs.lock().expect("run lock").get_mut(run_id) {
        r.status = status;
    }
}

fn finish(st: &AppState, run_id: &str, outcome: Result<ValidationReport, String>) {
    let mut runs = st.runs.lock().expect("run lock");
    let Some(run) = runs.get_mut(run_id) else { return };
    run.finished_at = Some(now());
    match outcome {
        Ok(report) => {
            run.status = RunStatus::Completed;
            run.report = Some(report);
        }
        Err(e) => {
            run.status = RunStatus::Failed;
            run.error = Some(e);
        }
    }
    if let Err(e) = st.run_store.append(run) {
        log::error!("cannot persist run {run_id}: {e}");
    }
}

async fn get_run(State(st): State<Arc<AppState>>, UrlPath(id): UrlPath<String>) -> ApiResult {
    let run = st
        .runs
        .lock()
        .expect("run lock")
        .get(&id)
        .cloned()
        .ok_or_else(|| ApiError::not_found(format!("unknown run {id}")))?;
    Ok(json_body(&run).into_response())
}

async fn get_ledger(State(st): State<Arc<AppState>>) -> ApiResult {
    let ledger = st.ledger.clone();
    let summary = tokio::task::spawn_blocking(move || ledger.summary())
        .await
        .map_err(|e| ApiError::internal(e.to_string()))?
        .map_err(|e| ApiError::internal(e.to_string()))?;
    Ok(json_body(&summary).into_response())
}

pub async fn serve(addr: &str, state: AppState) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await.with_context(|| format!("cannot bind {addr}"))?;
    log::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router(Arc::new(state))).await?;
    Ok(())
}
