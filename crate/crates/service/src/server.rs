//! HTTP API: system registration, builds as polled jobs, browsing, queries
//! and chat sessions streamed as server-sent events.

use std::collections::BTreeMap;
use std::convert::Infallible;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex, RwLock};

use axum::extract::{Path, Query, State};
use axum::http::{HeaderValue, StatusCode};
use axum::response::sse::{Event, KeepAlive, Sse};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::Stream;
use repograph_core::agent::{run, AgentContext, AgentTrace, TraceRecord, TraceStatus};
use repograph_core::graph::{CodeGraph, Edge, Node, NodeId, NodeKind, QueryError, Subgraph};
use repograph_core::pipeline::{Phase, Progress};
use repograph_core::provider::LlmProvider;
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::mpsc;
use tokio_stream::wrappers::UnboundedReceiverStream;
use tokio_stream::StreamExt;

use crate::config::SystemConfig;
use crate::ops::{build_and_save, load_graph};

pub const DEFAULT_PAGE: usize = 100;
pub const MAX_PAGE: usize = 1000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct BuildJob {
    pub job_id: String,
    pub system_id: String,
    pub phase: Phase,
    pub progress: Progress,
    pub diagnostics: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

pub struct SystemEntry {
    pub id: String,
    pub config: SystemConfig,
    provider: Arc<dyn LlmProvider>,
    graph: RwLock<Option<Arc<CodeGraph>>>,
    building: AtomicBool,
    traces: Mutex<BTreeMap<String, AgentTrace>>,
}

impl SystemEntry {
    pub fn graph(&self) -> Option<Arc<CodeGraph>> {
        self.graph.read().expect("graph lock").clone()
    }
}

#[derive(Default)]
struct Inner {
    systems: RwLock<BTreeMap<String, Arc<SystemEntry>>>,
    jobs: RwLock<BTreeMap<String, Arc<Mutex<BuildJob>>>>,
    next_job: AtomicU64,
    next_trace: AtomicU64,
}

#[derive(Clone, Default)]
pub struct AppState {
    inner: Arc<Inner>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    body: serde_json::Value,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, body: json!({ "error": message.into() }) }
    }

    fn not_found(what: &str, id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown {what} {id:?}"))
    }

    fn query(e: &QueryError) -> Self {
        let QueryError::Parse { position, expected, found } = e;
        Self {
            status: StatusCode::BAD_REQUEST,
            body: json!({ "error": e.to_string(), "position": position, "expected": expected, "found": found }),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

impl AppState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a validated config and loads its snapshot when one exists.
    pub fn register(&self, config: SystemConfig) -> ApiResult<String> {
        config.validate().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let provider = config.make_provider().map_err(|e| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, e.to_string()))?;
        let id = config.name.clone();
        let mut systems = self.inner.systems.write().expect("systems lock");
        if systems.contains_key(&id) {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("system {id:?} is already registered")));
        }
        let graph = if config.snapshot.is_file() {
            match load_graph(&config.snapshot) {
                Ok(g) => Some(Arc::new(g)),
                Err(e) => {
                    tracing::warn!(system = %id, error = %e, "snapshot not loaded");
                    None
                }
            }
        } else {
            None
        };
        let entry = SystemEntry {
            id: id.clone(),
            config,
            provider,
            graph: RwLock::new(graph),
            building: AtomicBool::new(false),
            traces: Mutex::new(BTreeMap::new()),
        };
        systems.insert(id.clone(), Arc::new(entry));
        Ok(id)
    }

    pub fn system(&self, id: &str) -> ApiResult<Arc<SystemEntry>> {
        self.inner.systems.read().expect("systems lock").get(id).cloned().ok_or_else(|| ApiError::not_found("system", id))
    }

    fn built(&self, id: &str) -> ApiResult<(Arc<SystemEntry>, Arc<CodeGraph>)> {
        let sys = self.system(id)?;
        let graph = sys.graph().ok_or_else(|| ApiError::new(StatusCode::CONFLICT, format!("system {id:?} has not been built")))?;
        Ok((sys, graph))
    }

    pub fn job(&self, id: &str) -> Option<BuildJob> {
        self.inner.jobs.read().expect("jobs lock").get(id).map(|j| j.lock().expect("job lock").clone())
    }

    /// Starts a build on the blocking pool; one build per system at a time.
    pub fn start_build(&self, system_id: &str) -> ApiResult<String> {
        let sys = self.system(system_id)?;
        if sys.building.swap(true, Ordering::SeqCst) {
            return Err(ApiError::new(StatusCode::CONFLICT, format!("a build of {system_id:?} is already running")));
        }
        let job_id = format!("job-{}", self.inner.next_job.fetch_add(1, Ordering::SeqCst) + 1);
        let job = Arc::new(Mutex::new(BuildJob {
            job_id: job_id.clone(),
            system_id: system_id.to_string(),
            phase: Phase::Scanning,
            progress: Progress::default(),
            diagnostics: Vec::new(),
            error: None,
        }));
        self.inner.jobs.write().expect("jobs lock").insert(job_id.clone(), job.clone());
        tokio::task::spawn_blocking(move || {
            let mut on_phase = |phase: Phase, progress: &Progress| {
                let mut j = job.lock().expect("job lock");
                // Phases only move forward; the terminal phase is set once
                // the snapshot is written and the graph swapped in.
                if phase >= j.phase && !matches!(phase, Phase::Done | Phase::Failed) {
                    j.phase = phase;
                }
                j.progress = progress.clone();
            };
            let result = build_and_save(&sys.config, sys.provider.as_ref(), &mut on_phase);
            let mut j = job.lock().expect("job lock");
            match result {
                Ok((graph, report)) => {
                    j.diagnostics = report.extraction.repos.iter().flat_map(|r| r.diagnostics.iter().map(|d| format!("{}: {d}", r.name))).collect();
                    j.diagnostics.extend(report.enrichment.diagnostics.iter().cloned());
                    *sys.graph.write().expect("graph lock") = Some(Arc::new(graph));
                    j.phase = Phase::Done;
                }
                Err(e) => {
                    j.error = Some(e.to_string());
                    j.phase = Phase::Failed;
                }
            }
            sys.building.store(false, Ordering::SeqCst);
        });
        Ok(job_id)
    }

    pub fn trace(&self, system_id: &str, trace_id: &str) -> ApiResult<AgentTrace> {
        let sys = self.system(system_id)?;
        let traces = sys.traces.lock().expect("traces lock");
        traces.get(trace_id).cloned().ok_or_else(|| ApiError::not_found("trace", trace_id))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/api/systems", post(register_system).get(list_systems))
        .route("/api/systems/{id}", get(system_summary))
        .route("/api/systems/{id}/build", post(build))
        .route("/api/jobs/{job_id}", get(job_status))
        .route("/api/systems/{id}/graph", get(browse))
        .route("/api/systems/{id}/nodes/{node_id}", get(node_detail))
        .route("/api/systems/{id}/query", post(query))
        .route("/api/systems/{id}/chat", post(chat))
        .route("/api/systems/{id}/traces", get(list_traces))
        .route("/api/systems/{id}/traces/{trace_id}", get(get_trace))
        .with_state(state)
}

async fn register_system(State(state): State<AppState>, Json(config): Json<SystemConfig>) -> ApiResult<impl IntoResponse> {
    let st = state.clone();
    let id = tokio::task::spawn_blocking(move || st.register(config))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))??;
    Ok((StatusCode::CREATED, Json(json!({ "systemId": id }))))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct SystemSummary {
    system_id: String,
    name: String,
    built: bool,
    building: bool,
    nodes: usize,
    edges: usize,
    description: Option<String>,
}

fn summary(sys: &SystemEntry) -> SystemSummary {
    let graph = sys.graph();
    SystemSummary {
        system_id: sys.id.clone(),
        name: sys.config.name.clone(),
        built: graph.is_some(),
        building: sys.building.load(Ordering::SeqCst),
        nodes: graph.as_ref().map_or(0, |g| g.node_count()),
        edges: graph.as_ref().map_or(0, |g| g.edge_count()),
        description: graph.as_ref().and_then(|g| g.system_id().and_then(|s| g.node(s)).and_then(|n| n.description.clone())),
    }
}

async fn list_systems(State(state): State<AppState>) -> Json<serde_json::Value> {
    let systems: Vec<SystemSummary> = state.inner.systems.read().expect("systems lock").values().map(|s| summary(s)).collect();
    Json(json!({ "systems": systems }))
}

async fn system_summary(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<SystemSummary>> {
    let sys = state.system(&id)?;
    Ok(Json(summary(&sys)))
}

async fn build(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    let job_id = state.start_build(&id)?;
    Ok((StatusCode::ACCEPTED, Json(json!({ "jobId": job_id }))))
}

async fn job_status(State(state): State<AppState>, Path(job_id): Path<String>) -> ApiResult<Json<BuildJob>> {
    state.job(&job_id).map(Json).ok_or_else(|| ApiError::not_found("job", &job_id))
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "camelCase")]
struct BrowseParams {
    kind: Option<String>,
    project_id: Option<String>,
    limit: Option<usize>,
    offset: Option<usize>,
}

#[derive(Serialize)]
struct Page {
    total: usize,
    offset: usize,
    limit: usize,
    #[serde(flatten)]
    subgraph: Subgraph,
}

/// Nodes ordered by id, filtered by kind and project, one page at a time,
/// with the edges among the page's nodes.
pub fn browse_page(graph: &CodeGraph, kind: Option<NodeKind>, project: Option<&NodeId>, limit: usize, offset: usize) -> (usize, Subgraph) {
    let selected: Vec<&NodeId> = graph
        .nodes()
        .filter(|n| kind.is_none_or(|k| n.kind == k))
        .filter(|n| project.is_none_or(|p| &n.id == p || graph.project_of(&n.id) == Some(p)))
        .map(|n| &n.id)
        .collect();
    let total = selected.len();
    let page = selected.into_iter().skip(offset).take(limit);
    let sub = graph.induced_subgraph(page).expect("ids come from the graph");
    (total, sub.without_node_attr("source"))
}

async fn browse(State(state): State<AppState>, Path(id): Path<String>, Query(params): Query<BrowseParams>) -> ApiResult<Json<serde_json::Value>> {
    let (_, graph) = state.built(&id)?;
    let kind = match params.kind.as_deref().filter(|k| !k.is_empty()) {
        None => None,
        Some(k) => Some(
            NodeKind::ALL
                .into_iter()
                .find(|x| x.as_str().eq_ignore_ascii_case(k))
                .ok_or_else(|| ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("unknown node kind {k:?}")))?,
        ),
    };
    let project = match params.project_id.as_deref().filter(|p| !p.is_empty()) {
        None => None,
        Some(p) => match graph.get(p) {
            Some(n) if n.kind == NodeKind::Project => Some(n.id.clone()),
            Some(_) => return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("{p:?} is not a project"))),
            None => return Err(ApiError::not_found("project", p)),
        },
    };
    let limit = params.limit.unwrap_or(DEFAULT_PAGE);
    if limit == 0 || limit > MAX_PAGE {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, format!("limit must be between 1 and {MAX_PAGE}")));
    }
    let offset = params.offset.unwrap_or(0);
    let (total, subgraph) = browse_page(&graph, kind, project.as_ref(), limit, offset);
    Ok(Json(serde_json::to_value(Page { total, offset, limit, subgraph }).expect("page serializes")))
}

#[derive(Serialize)]
#[serde(rename_all = "camelCase")]
struct NodeDetail {
    node: Node,
    #[serde(skip_serializing_if = "Option::is_none")]
    source: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    project_id: Option<NodeId>,
    incoming: Vec<Edge>,
    outgoing: Vec<Edge>,
}

fn edge_of(graph: &CodeGraph, key: &repograph_core::graph::EdgeKey) -> Edge {
    Edge { src: key.src.clone(), dst: key.dst.clone(), label: key.label.clone(), attrs: graph.edge_attrs(key).cloned().unwrap_or_default() }
}

async fn node_detail(State(state): State<AppState>, Path((id, node_id)): Path<(String, String)>) -> ApiResult<Json<NodeDetail>> {
    let (_, graph) = state.built(&id)?;
    let node = graph.get(&node_id).ok_or_else(|| ApiError::not_found("node", &node_id))?;
    let mut shown = node.clone();
    shown.embedding = None;
    let source = shown.attrs.remove("source").filter(|_| node.kind == NodeKind::Code);
    Ok(Json(NodeDetail {
        project_id: graph.project_of(&node.id).cloned(),
        incoming: graph.in_edges(&node.id).map(|k| edge_of(&graph, k)).collect(),
        outgoing: graph.out_edges(&node.id).map(|k| edge_of(&graph, k)).collect(),
        node: shown,
        source,
    }))
}

#[derive(Debug, Deserialize)]
struct QueryBody {
    query: String,
}

async fn query(State(state): State<AppState>, Path(id): Path<String>, Json(body): Json<QueryBody>) -> ApiResult<Response> {
    let (_, graph) = state.built(&id)?;
    match graph.execute_query(&body.query) {
        Ok(rows) => Ok(Json(rows).into_response()),
        Err(e) => Err(ApiError::query(&e)),
    }
}

#[derive(Debug, Deserialize)]
struct ChatBody {
    question: String,
}

/// SSE event name: records map to `start`, `step`, `final`; a final
/// record of a failed run is sent as `error`.
pub fn event_name(record: &TraceRecord) -> &'static str {
    match record {
        TraceRecord::Final { status: TraceStatus::Error, .. } => "error",
        r => r.event_name(),
    }
}

fn to_event(record: &TraceRecord) -> Event {
    Event::default().event(event_name(record)).data(serde_json::to_string(record).expect("trace records serialize"))
}

async fn chat(State(state): State<AppState>, Path(id): Path<String>, Json(body): Json<ChatBody>) -> ApiResult<Response> {
    let (sys, graph) = state.built(&id)?;
    let question = body.question.trim().to_string();
    if question.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "question must not be empty"));
    }
    let trace_id = format!("trace-{}", state.inner.next_trace.fetch_add(1, Ordering::SeqCst) + 1);
    let (tx, rx) = mpsc::unbounded_channel::<TraceRecord>();
    let tid = trace_id.clone();
    tokio::task::spawn_blocking(move || {
        let ctx = AgentContext::new(&graph, sys.provider.as_ref(), sys.config.agent_config());
        let mut last = None;
        let trace = run(&question, &ctx, &mut |r| match r {
            TraceRecord::Final { .. } => last = Some(r.clone()),
            other => {
                let _ = tx.send(other.clone());
            }
        });
        // Stored before the final event goes out, so a client that
        // fetches the trace on `final` always finds it.
        sys.traces.lock().expect("traces lock").insert(tid, trace);
        if let Some(f) = last {
            let _ = tx.send(f);
        }
    });
    let stream: std::pin::Pin<Box<dyn Stream<Item = Result<Event, Infallible>> + Send>> =
        Box::pin(UnboundedReceiverStream::new(rx).map(|r| Ok(to_event(&r))));
    let mut resp = Sse::new(stream).keep_alive(KeepAlive::default()).into_response();
    resp.headers_mut().insert("x-trace-id", HeaderValue::from_str(&trace_id).expect("ascii id"));
    Ok(resp)
}

async fn list_traces(State(state): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<serde_json::Value>> {
    let sys = state.system(&id)?;
    let traces = sys.traces.lock().expect("traces lock");
    let list: Vec<_> = traces
        .iter()
        .map(|(tid, t)| json!({ "traceId": tid, "question": t.question, "status": t.status, "steps": t.step_count() }))
        .collect();
    Ok(Json(json!({ "traces": list })))
}

async fn get_trace(State(state): State<AppState>, Path((id, trace_id)): Path<(String, String)>) -> ApiResult<Json<AgentTrace>> {
    Ok(Json(state.trace(&id, &trace_id)?))
}

/// Serves until interrupted.
pub async fn serve(state: AppState, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "listening");
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
