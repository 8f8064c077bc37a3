//! JSON-over-HTTP bridge between search runs and human experts.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/api/v1/runs` | run summaries |
//! | GET | `/api/v1/runs/{run_id}` | summary, config, cell tree, result |
//! | POST | `/api/v1/runs` | start a run, returns its id |
//! | GET | `/api/v1/queries?state=pending` | open expert queries |
//! | POST | `/api/v1/queries/{query_id}/response` | answer a query |

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use hitlbo_core::expert::{PendingQuery, RespondError};
use hitlbo_core::gp::PriorWire;
use hitlbo_core::reduction::InstanceRef;
use hitlbo_core::{Cell, Error, ExpertError, ExpertQuery, ExpertQueue, PriorSpec, SearchConfig, SearchResult, SearchRun};
use log::{info, warn};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::artifact::{iso_from_unix_ms, now_iso};
use crate::experts::{self, BoxedExpert, ExpertMode};
use crate::instance::InstanceSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunStatus {
    Running,
    /// Blocked on an expert query.
    Waiting,
    Finished,
    Suspended,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub run_id: String,
    pub status: RunStatus,
    pub created_at: String,
    pub updated_at: String,
    pub instance: Option<InstanceRef>,
    pub expert: ExpertMode,
    pub cells: usize,
    pub evaluations: usize,
    pub expert_queries: u64,
    pub best_value: Option<f64>,
    pub pending_query: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunDetail {
    #[serde(flatten)]
    pub summary: RunSummary,
    pub config: SearchConfig,
    pub cells: Vec<Cell>,
    pub result: Option<SearchResult>,
}

struct Slot {
    summary: RunSummary,
    config: SearchConfig,
    cells: Vec<Cell>,
    result: Option<SearchResult>,
}

/// Runs known to this process plus the queue their experts wait on.
pub struct Registry {
    queue: Arc<ExpertQueue>,
    runs: Mutex<BTreeMap<String, Slot>>,
    counter: AtomicU64,
    /// How long a server-side remote expert blocks before re-polling.
    poll: Duration,
}

/// How a driver reacts when the remote expert times out.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OnTimeout {
    Retry,
    Suspend,
}

pub enum Outcome {
    Finished(SearchRun),
    Suspended { run: SearchRun, query_id: String },
}

impl Registry {
    pub fn new(queue: Arc<ExpertQueue>) -> Arc<Self> {
        Self::with_poll(queue, Duration::from_secs(1))
    }

    pub fn with_poll(queue: Arc<ExpertQueue>, poll: Duration) -> Arc<Self> {
        Arc::new(Registry { queue, runs: Mutex::new(BTreeMap::new()), counter: AtomicU64::new(0), poll })
    }

    pub fn queue(&self) -> &Arc<ExpertQueue> {
        &self.queue
    }

    fn lock(&self) -> MutexGuard<'_, BTreeMap<String, Slot>> {
        self.runs.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn register(&self, run: &SearchRun, instance: Option<InstanceRef>, expert: ExpertMode) {
        let now = now_iso();
        let summary = RunSummary {
            run_id: run.run_id().to_string(),
            status: RunStatus::Running,
            created_at: now.clone(),
            updated_at: now,
            instance,
            expert,
            cells: 0,
            evaluations: 0,
            expert_queries: 0,
            best_value: None,
            pending_query: None,
            error: None,
        };
        let slot = Slot { summary, config: run.config().clone(), cells: Vec::new(), result: None };
        self.lock().insert(run.run_id().to_string(), slot);
        self.publish(run, RunStatus::Running, None);
    }

    pub fn publish(&self, run: &SearchRun, status: RunStatus, error: Option<String>) {
        let mut runs = self.lock();
        let Some(slot) = runs.get_mut(run.run_id()) else { return };
        let result = run.result();
        let s = &mut slot.summary;
        s.status = status;
        s.updated_at = now_iso();
        s.cells = run.cells().len();
        s.evaluations = run.evaluations().len();
        s.expert_queries = result.as_ref().map_or(0, |r| r.expert_queries);
        s.best_value = run.best().map(|b| b.value);
        s.error = error;
        slot.cells = run.cells().to_vec();
        slot.result = result;
    }

    fn pending_for(&self, run_id: &str) -> Option<String> {
        self.queue.pending().into_iter().find(|p| p.query.run_id == run_id).map(|p| p.query.query_id)
    }

    fn live(&self, mut s: RunSummary) -> RunSummary {
        s.pending_query = self.pending_for(&s.run_id);
        if s.status == RunStatus::Running && s.pending_query.is_some() {
            s.status = RunStatus::Waiting;
        }
        s
    }

    pub fn summaries(&self) -> Vec<RunSummary> {
        let summaries: Vec<RunSummary> = self.lock().values().map(|s| s.summary.clone()).collect();
        summaries.into_iter().map(|s| self.live(s)).collect()
    }

    pub fn detail(&self, run_id: &str) -> Option<RunDetail> {
        let detail = self.lock().get(run_id).map(|slot| RunDetail {
            summary: slot.summary.clone(),
            config: slot.config.clone(),
            cells: slot.cells.clone(),
            result: slot.result.clone(),
        })?;
        Some(RunDetail { summary: self.live(detail.summary), ..detail })
    }

    fn next_run_id(&self) -> String {
        let n = self.counter.fetch_add(1, Ordering::Relaxed) + 1;
        let mut id = format!("run-{n}");
        while self.lock().contains_key(&id) {
            id = format!("run-{}", self.counter.fetch_add(1, Ordering::Relaxed) + 1);
        }
        id
    }
}

/// Steps `run` to completion, publishing its state after every step.
pub fn drive(
    registry: &Registry,
    mut run: SearchRun,
    expert: &mut BoxedExpert,
    on_timeout: OnTimeout,
) -> anyhow::Result<Outcome> {
    loop {
        match run.step(expert) {
            Ok(true) => {
                registry.publish(&run, RunStatus::Finished, None);
                return Ok(Outcome::Finished(run));
            }
            Ok(false) => registry.publish(&run, RunStatus::Running, None),
            Err(Error::Expert(ExpertError::Timeout { query_id, .. })) => match on_timeout {
                OnTimeout::Retry => registry.publish(&run, RunStatus::Waiting, None),
                OnTimeout::Suspend => {
                    registry.publish(&run, RunStatus::Suspended, None);
                    return Ok(Outcome::Suspended { run, query_id });
                }
            },
            Err(e) => {
                registry.publish(&run, RunStatus::Failed, Some(e.to_string()));
                return Err(e.into());
            }
        }
    }
}

pub fn router(registry: Arc<Registry>) -> Router {
    Router::new()
        .route("/api/v1/runs", get(list_runs).post(create_run))
        .route("/api/v1/runs/{run_id}", get(get_run))
        .route("/api/v1/queries", get(list_queries))
        .route("/api/v1/queries/{query_id}/response", post(respond))
        .with_state(registry)
}

/// Serves the API on an already bound listener until the process exits.
pub fn serve_blocking(registry: Arc<Registry>, listener: std::net::TcpListener) -> anyhow::Result<()> {
    listener.set_nonblocking(true)?;
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
    rt.block_on(async move {
        let listener = tokio::net::TcpListener::from_std(listener)?;
        axum::serve(listener, router(registry)).await?;
        Ok(())
    })
}

/// Starts the API on a background thread, returning the bound address.
pub fn spawn(registry: Arc<Registry>, bind: &str) -> anyhow::Result<std::net::SocketAddr> {
    let listener = std::net::TcpListener::bind(bind)?;
    let addr = listener.local_addr()?;
    thread::spawn(move || {
        if let Err(e) = serve_blocking(registry, listener) {
            warn!("expert bridge stopped: {e:#}");
        }
    });
    Ok(addr)
}

fn error(status: StatusCode, msg: impl Into<String>) -> Response {
    (status, Json(json!({ "error": msg.into() }))).into_response()
}

async fn list_runs(State(reg): State<Arc<Registry>>) -> Json<Vec<RunSummary>> {
    Json(reg.summaries())
}

async fn get_run(State(reg): State<Arc<Registry>>, Path(run_id): Path<String>) -> Response {
    match reg.detail(&run_id) {
        Some(d) => Json(d).into_response(),
        None => error(StatusCode::NOT_FOUND, format!("unknown run {run_id}")),
    }
}

#[derive(Debug, Deserialize)]
struct QueryFilter {
    state: Option<String>,
}

#[derive(Debug, Serialize)]
struct WireQuery {
    seq: u64,
    enqueued_at: String,
    #[serde(flatten)]
    query: ExpertQuery,
}

impl From<PendingQuery> for WireQuery {
    fn from(p: PendingQuery) -> Self {
        WireQuery { seq: p.seq, enqueued_at: iso_from_unix_ms(p.enqueued_unix_ms), query: p.query }
    }
}

async fn list_queries(State(reg): State<Arc<Registry>>, Query(filter): Query<QueryFilter>) -> Response {
    match filter.state.as_deref() {
        None | Some("pending") => {
            let list: Vec<WireQuery> = reg.queue.pending().into_iter().map(WireQuery::from).collect();
            Json(list).into_response()
        }
        Some(other) => error(StatusCode::BAD_REQUEST, format!("unsupported state {other:?}, only \"pending\" is listed")),
    }
}

#[derive(Debug, Deserialize)]
struct ResponseBody {
    #[serde(flatten)]
    prior: PriorWire,
    #[serde(default)]
    annotation: String,
}

async fn respond(
    State(reg): State<Arc<Registry>>,
    Path(query_id): Path<String>,
    Json(body): Json<ResponseBody>,
) -> Response {
    let prior = match PriorSpec::try_from(body.prior) {
        Ok(p) => p,
        Err(e) => return error(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()),
    };
    match reg.queue.respond(&query_id, prior, body.annotation) {
        Ok(()) => {
            info!("query {query_id} answered");
            Json(json!({ "status": "accepted", "query_id": query_id, "received_at": now_iso() })).into_response()
        }
        Err(RespondError::Unknown(_)) => error(StatusCode::NOT_FOUND, format!("unknown or closed query {query_id}")),
        Err(RespondError::Contradiction(diag)) => (
            StatusCode::CONFLICT,
            Json(json!({ "error": "prior contradicts the run's ledger", "diagnostic": diag, "query_id": query_id })),
        )
            .into_response(),
    }
}

#[derive(Debug, Deserialize)]
pub struct CreateRun {
    #[serde(flatten)]
    pub config: SearchConfig,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub expert: ExpertMode,
    /// Variance of the simulated expert's prior and of the MLE fallback.
    #[serde(default = "unit")]
    pub variance: f64,
}

fn unit() -> f64 {
    1.0
}

async fn create_run(State(reg): State<Arc<Registry>>, Json(req): Json<CreateRun>) -> Response {
    match start_run(&reg, req) {
        Ok(run_id) => {
            (StatusCode::CREATED, Json(json!({ "run_id": run_id, "created_at": now_iso() }))).into_response()
        }
        Err(e) => error(StatusCode::BAD_REQUEST, format!("{e:#}")),
    }
}

/// Validates a run request and starts its driver thread.
pub fn start_run(reg: &Arc<Registry>, req: CreateRun) -> anyhow::Result<String> {
    let loaded = req.instance.load()?;
    let run_id = reg.next_run_id();
    let run = SearchRun::new(run_id.clone(), loaded.instance, req.config)?;
    let mut expert = experts::build(req.expert, req.variance, &reg.queue, reg.poll)?;
    reg.register(&run, Some(loaded.reference), req.expert);
    let reg = reg.clone();
    thread::spawn(move || {
        let id = run.run_id().to_string();
        match drive(&reg, run, &mut expert, OnTimeout::Retry) {
            Ok(_) => info!("run {id} finished"),
            Err(e) => warn!("run {id} failed: {e:#}"),
        }
    });
    Ok(run_id)
}
