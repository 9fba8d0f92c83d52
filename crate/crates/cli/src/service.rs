//! HTTP service over immutable copilot snapshots.
//!
//! Handlers take an `Arc` to the current snapshot when they start and use
//! only that for the whole request. Reloads and registry edits build a new
//! snapshot off to the side and swap the pointer, so a request never sees
//! parts of two snapshots.

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, RwLock};

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{delete, get, post};
use axum::{Json, Router};
use orchestrator_core::embedding::EmbedError;
use orchestrator_core::orchestrator::{route, AgentSpec, OrchestratorError};
use orchestrator_core::pipeline::{Copilot, ConversationStore};
use orchestrator_core::runtime::{RuntimeError, APOLOGY};
use serde::Deserialize;
use serde_json::{json, Value};

pub struct Snapshot {
    pub id: u64,
    pub copilot: Copilot,
}

pub type Loader = Box<dyn Fn() -> Result<Copilot, String> + Send + Sync>;

pub struct AppState {
    current: RwLock<Arc<Snapshot>>,
    next_id: AtomicU64,
    /// Serializes snapshot writers so registry edits are not lost.
    writer: tokio::sync::Mutex<()>,
    conversations: ConversationStore,
    loader: Loader,
}

impl AppState {
    pub fn new(copilot: Copilot, loader: Loader) -> Arc<Self> {
        Arc::new(AppState {
            current: RwLock::new(Arc::new(Snapshot { id: 1, copilot })),
            next_id: AtomicU64::new(2),
            writer: tokio::sync::Mutex::new(()),
            conversations: ConversationStore::new(),
            loader,
        })
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.current.read().unwrap_or_else(|e| e.into_inner()).clone()
    }

    fn install(&self, copilot: Copilot) -> Arc<Snapshot> {
        let snap = Arc::new(Snapshot { id: self.next_id.fetch_add(1, Ordering::SeqCst), copilot });
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = snap.clone();
        snap
    }
}

pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError { status, code, message: message.into() }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({"code": self.code, "message": self.message}))).into_response()
    }
}

impl From<OrchestratorError> for ApiError {
    fn from(e: OrchestratorError) -> Self {
        use OrchestratorError::*;
        let (status, code) = match &e {
            DuplicateId(_) => (StatusCode::CONFLICT, "duplicate_id"),
            SecondSeparator(_) => (StatusCode::CONFLICT, "second_separator"),
            HasChildren(_) => (StatusCode::CONFLICT, "has_children"),
            UnknownAgentId(_) => (StatusCode::NOT_FOUND, "unknown_agent"),
            EmptyDescription | EmptyPositivePath => (StatusCode::BAD_REQUEST, "invalid_agent"),
            EmbeddingFailure(EmbedError::EmptyText) => (StatusCode::BAD_REQUEST, "empty_text"),
            EmbeddingFailure(EmbedError::RemoteUnavailable(_)) => (StatusCode::SERVICE_UNAVAILABLE, "embedding_unavailable"),
            EmptyRegistry | NoSeparator => (StatusCode::SERVICE_UNAVAILABLE, "registry_not_routable"),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, "internal"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn parse<T: for<'de> Deserialize<'de>>(body: &Bytes) -> Result<T, ApiError> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_request", e.to_string()))
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ApiError> + Send + 'static) -> Result<T, ApiError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
}

fn versions(s: &Snapshot) -> Value {
    let c = &s.copilot;
    json!({
        "service": env!("CARGO_PKG_VERSION"),
        "snapshot": s.id,
        "model": c.model.version,
        "model_trained_on": c.model.trained_on,
        "registry_revision": c.registry.revision(),
        "planner_depth": c.tree.depth,
    })
}

async fn healthz(State(st): State<Arc<AppState>>) -> Json<Value> {
    Json(json!({"status": "ok", "versions": versions(&st.snapshot())}))
}

#[derive(Deserialize)]
struct RouteRequest {
    text: String,
}

async fn route_handler(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: RouteRequest = parse(&body)?;
    let snap = st.snapshot();
    blocking(move || {
        let c = &snap.copilot;
        let decision = route(&c.model, &c.registry, c.embedder.as_ref(), &req.text)?;
        let mut body = serde_json::to_value(decision).expect("serializable");
        body["snapshot"] = json!(snap.id);
        Ok(Json(body).into_response())
    })
    .await
}

#[derive(Deserialize)]
struct ChatRequest {
    conversation_id: String,
    text: String,
}

async fn chat_handler(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let req: ChatRequest = parse(&body)?;
    if req.conversation_id.trim().is_empty() {
        return Err(ApiError::new(StatusCode::BAD_REQUEST, "bad_request", "conversation_id is empty"));
    }
    let snap = st.snapshot();
    let conv = st.conversations.get(&req.conversation_id);
    blocking(move || {
        let mut state = conv.lock().unwrap_or_else(|e| e.into_inner());
        let outcome = snap.copilot.handle_turn(&mut state, &req.text, None).map_err(|e| match e {
            orchestrator_core::pipeline::PipelineError::Orchestrator(o) => ApiError::from(o),
            other => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", other.to_string()),
        })?;
        let mut body = json!({
            "conversation_id": req.conversation_id,
            "selected": outcome.routing.selected,
            "plan_label": outcome.plan_label,
            "plan": outcome.plan.agent_ids(),
            "model_version": outcome.routing.model_version,
            "registry_revision": outcome.routing.registry_revision,
        });
        match outcome.result {
            Ok(r) => {
                body["response_text"] = json!(r.response_text);
                body["actions"] = json!(r.actions);
                body["steps_taken"] = json!(r.steps_taken);
                body["used_default_path"] = json!(r.used_default_path);
            }
            Err(RuntimeError::DefaultPathFailed { agent, reason, steps_taken }) => {
                body["response_text"] = json!(APOLOGY);
                body["actions"] = json!([]);
                body["steps_taken"] = json!(steps_taken);
                body["used_default_path"] = json!(true);
                body["error"] = json!({"code": "default_path_failed", "message": format!("{agent}: {reason}")});
            }
            Err(e @ RuntimeError::PlanInvalid(_)) => {
                return Err(ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "plan_invalid", e.to_string()));
            }
        }
        Ok(Json(body).into_response())
    })
    .await
}

async fn list_agents(State(st): State<Arc<AppState>>) -> Json<Value> {
    let snap = st.snapshot();
    let agents: Vec<&AgentSpec> = snap.copilot.registry.agents().collect();
    Json(json!({"registry_revision": snap.copilot.registry.revision(), "agents": agents}))
}

async fn add_agent(State(st): State<Arc<AppState>>, body: Bytes) -> Result<Response, ApiError> {
    let spec: AgentSpec = parse(&body)?;
    let _guard = st.writer.lock().await;
    let base = st.snapshot();
    let st2 = st.clone();
    blocking(move || {
        let mut copilot = base.copilot.clone();
        let mut registry = (*copilot.registry).clone();
        let id = spec.agent_id.clone();
        let revision = registry.register_agent(spec, copilot.embedder.as_ref())?;
        copilot.registry = Arc::new(registry);
        let snap = st2.install(copilot);
        Ok((StatusCode::CREATED, Json(json!({"agent_id": id, "registry_revision": revision, "snapshot": snap.id}))).into_response())
    })
    .await
}

async fn remove_agent(State(st): State<Arc<AppState>>, Path(id): Path<String>) -> Result<Response, ApiError> {
    let _guard = st.writer.lock().await;
    let base = st.snapshot();
    if base.copilot.registry.get(&id).is_some_and(|a| a.is_separator) {
        return Err(ApiError::new(StatusCode::CONFLICT, "separator_required", "the separator agent cannot be removed"));
    }
    let mut copilot = base.copilot.clone();
    let mut registry = (*copilot.registry).clone();
    let removed = registry.remove_agent(&id)?;
    let revision = registry.revision();
    copilot.registry = Arc::new(registry);
    let snap = st.install(copilot);
    Ok(Json(json!({"removed": removed.agent_id, "registry_revision": revision, "snapshot": snap.id})).into_response())
}

async fn reload(State(st): State<Arc<AppState>>) -> Result<Response, ApiError> {
    let _guard = st.writer.lock().await;
    let st2 = st.clone();
    blocking(move || {
        let copilot = (st2.loader)().map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "reload_failed", e))?;
        let snap = st2.install(copilot);
        Ok(Json(json!({"status": "reloaded", "versions": versions(&snap)})).into_response())
    })
    .await
}

async fn not_found() -> ApiError {
    ApiError::new(StatusCode::NOT_FOUND, "not_found", "no such endpoint")
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/route", post(route_handler))
        .route("/chat", post(chat_handler))
        .route("/agents", get(list_agents).post(add_agent))
        .route("/agents/{id}", delete(remove_agent))
        .route("/admin/reload", post(reload))
        .fallback(not_found)
        .with_state(state)
}

/// Serves until ctrl-c. Prints the bound address on stdout first.
pub async fn serve(state: Arc<AppState>, bind: &str) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    let addr = listener.local_addr()?;
    println!("listening on {addr}");
    use std::io::Write;
    std::io::stdout().flush()?;
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
