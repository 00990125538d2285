//! HTTP front end for explanation sessions.
//!
//! | method | path | |
//! |---|---|---|
//! | GET | `/maps` | bundled maps with plans and foils |
//! | POST | `/sessions` | create a session (201) |
//! | GET | `/sessions/{id}` | the session with its history |
//! | POST | `/sessions/{id}/foils` | explain a foil (200, or 202 with a poll path) |
//! | GET | `/sessions/{id}/foils/{index}` | poll a history entry |
//!
//! Every JSON body carries the wire format version `v`. Requests whose
//! sampling budget exceeds the compute cap run in the background; the 202
//! response names the path to poll.

use std::collections::{HashMap, HashSet};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use foilscope::dialogue::{HistoryEntry, Session, SessionConfig, FORMAT_VERSION};
use foilscope::env::{bundled, Variant, BUNDLED};
use foilscope::model::BlackBoxModel;
use foilscope::Error as CoreError;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const DEFAULT_COMPUTE_CAP: usize = 5000;

#[derive(Clone, Debug)]
pub struct ServiceConfig {
    /// Sessions are written here as `{id}.json` and reloaded at startup.
    pub data_dir: Option<PathBuf>,
    /// Largest per-foil sample budget explained synchronously.
    pub compute_cap: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        ServiceConfig {
            data_dir: None,
            compute_cap: DEFAULT_COMPUTE_CAP,
        }
    }
}

#[derive(Default)]
struct Store {
    sessions: HashMap<String, Session>,
    /// Sessions with a background explanation in flight.
    pending: HashSet<String>,
    next_id: u64,
}

#[derive(Clone)]
pub struct AppState {
    store: Arc<Mutex<Store>>,
    config: Arc<ServiceConfig>,
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
    token: Option<String>,
}

impl ApiError {
    fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
            token: None,
        }
    }

    fn not_found(what: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", format!("{what} not found"))
    }
}

impl From<CoreError> for ApiError {
    fn from(e: CoreError) -> Self {
        let token = match &e {
            CoreError::UnknownMnemonic(t) => Some(t.clone()),
            _ => None,
        };
        let code = match &e {
            CoreError::UnknownMnemonic(_) => "unknown_action",
            CoreError::InvalidPlan(_) => "invalid_plan",
            CoreError::MapParse { .. } => "map_parse",
            CoreError::ManifestParse { .. } => "manifest_parse",
            _ => "unprocessable",
        };
        ApiError {
            status: StatusCode::UNPROCESSABLE_ENTITY,
            code,
            message: e.to_string(),
            token,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut err = json!({ "code": self.code, "message": self.message });
        if let Some(t) = self.token {
            err["token"] = Value::String(t);
        }
        (self.status, Json(json!({ "v": FORMAT_VERSION, "error": err }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn parse_body<T: for<'de> Deserialize<'de>>(body: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(body).map_err(|e| ApiError::new(StatusCode::BAD_REQUEST, "bad_json", e.to_string()))
}

#[derive(Serialize)]
struct MapInfo {
    id: &'static str,
    variant: Variant,
    grid: Vec<String>,
    plan: Vec<String>,
    foils: Vec<FoilInfo>,
}

#[derive(Serialize)]
struct FoilInfo {
    name: &'static str,
    actions: Vec<String>,
}

fn mnemonic_lines(text: &str) -> Vec<String> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect()
}

async fn list_maps() -> Json<Value> {
    let maps: Vec<MapInfo> = BUNDLED
        .iter()
        .map(|b| {
            let w = b.world();
            MapInfo {
                id: b.id,
                variant: w.variant(),
                grid: w.grid_lines().to_vec(),
                plan: mnemonic_lines(b.plan),
                foils: b
                    .foils
                    .iter()
                    .map(|(name, text)| FoilInfo {
                        name,
                        actions: mnemonic_lines(text),
                    })
                    .collect(),
            }
        })
        .collect();
    Json(json!({ "v": FORMAT_VERSION, "maps": maps }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateSession {
    map_id: Option<String>,
    /// Map text, used when `map_id` is absent.
    map: Option<String>,
    variant: Option<Variant>,
    plan: Option<Vec<String>>,
    vocabulary: Option<String>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    config: SessionConfig,
}

async fn create_session(State(app): State<AppState>, body: Bytes) -> ApiResult<Response> {
    let req: CreateSession = parse_body(&body)?;
    let id = {
        let mut store = app.store.lock().unwrap();
        store.next_id += 1;
        format!("s{}", store.next_id)
    };
    let (map_text, default_plan) = match (&req.map_id, &req.map) {
        (Some(m), _) => {
            let b = bundled(m).ok_or_else(|| ApiError::not_found(&format!("map `{m}`")))?;
            (b.map.to_string(), Some(b.plan))
        }
        (None, Some(text)) => (text.clone(), None),
        (None, None) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "missing_map",
                "either map_id or map is required",
            ))
        }
    };
    let plan = match (&req.plan, default_plan) {
        (Some(p), _) => p.join("\n"),
        (None, Some(p)) => p.to_string(),
        (None, None) => {
            return Err(ApiError::new(
                StatusCode::UNPROCESSABLE_ENTITY,
                "missing_plan",
                "a plan is required for a custom map",
            ))
        }
    };
    let mut session = Session::new(id.clone(), map_text, req.variant, &plan, req.vocabulary, req.seed, req.config)?;
    session.map_id = req.map_id;
    session.context()?;
    persist(&app.config, &session).await?;
    let body = serde_json::to_value(&session).expect("sessions serialise");
    app.store.lock().unwrap().sessions.insert(id, session);
    Ok((StatusCode::CREATED, Json(body)).into_response())
}

async fn get_session(State(app): State<AppState>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Value>> {
    let store = app.store.lock().unwrap();
    let s = store.sessions.get(&id).ok_or_else(|| ApiError::not_found(&format!("session `{id}`")))?;
    Ok(Json(serde_json::to_value(s).expect("sessions serialise")))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SubmitFoil {
    foil: Vec<String>,
}

fn entry_body(id: &str, index: usize, e: &HistoryEntry) -> Value {
    json!({
        "v": FORMAT_VERSION,
        "session_id": id,
        "index": index,
        "foil": e.foil,
        "explanation": e.explanation,
        "rendered_text": e.rendered_text,
    })
}

fn poll_path(id: &str, index: usize) -> String {
    format!("/sessions/{id}/foils/{index}")
}

async fn submit_foil(State(app): State<AppState>, UrlPath(id): UrlPath<String>, body: Bytes) -> ApiResult<Response> {
    let req: SubmitFoil = parse_body(&body)?;
    let mut session = {
        let store = app.store.lock().unwrap();
        let s = store.sessions.get(&id).ok_or_else(|| ApiError::not_found(&format!("session `{id}`")))?;
        if store.pending.contains(&id) {
            return Err(ApiError::new(
                StatusCode::CONFLICT,
                "pending",
                "an explanation for this session is still being computed",
            ));
        }
        s.clone()
    };
    if req.foil.is_empty() {
        return Err(ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "empty_foil", "the foil has no actions"));
    }
    let world = session.context()?.world;
    if let Some(bad) = req.foil.iter().find(|m| world.action_by_label(m).is_none()) {
        return Err(CoreError::UnknownMnemonic(bad.clone()).into());
    }
    let index = session.history.len();
    let budget = session.config.precondition_budget + session.config.cost_budget;
    if budget > app.config.compute_cap {
        app.store.lock().unwrap().pending.insert(id.clone());
        let app2 = app.clone();
        let id2 = id.clone();
        tokio::spawn(async move {
            let done = tokio::task::spawn_blocking(move || session.explain(&req.foil).map(|_| session)).await;
            let mut store = app2.store.lock().unwrap();
            store.pending.remove(&id2);
            if let Ok(Ok(s)) = done {
                let cfg = app2.config.clone();
                let copy = s.clone();
                store.sessions.insert(id2, s);
                drop(store);
                tokio::spawn(async move {
                    let _ = persist(&cfg, &copy).await;
                });
            }
        });
        let body = json!({ "v": FORMAT_VERSION, "status": "pending", "poll": poll_path(&id, index) });
        return Ok((StatusCode::ACCEPTED, Json(body)).into_response());
    }
    let session = tokio::task::spawn_blocking(move || session.explain(&req.foil).map(|_| session))
        .await
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))??;
    persist(&app.config, &session).await?;
    let body = entry_body(&id, index, &session.history[index]);
    app.store.lock().unwrap().sessions.insert(id, session);
    Ok((StatusCode::OK, Json(body)).into_response())
}

async fn poll_foil(State(app): State<AppState>, UrlPath((id, index)): UrlPath<(String, usize)>) -> ApiResult<Response> {
    let store = app.store.lock().unwrap();
    let s = store.sessions.get(&id).ok_or_else(|| ApiError::not_found(&format!("session `{id}`")))?;
    if let Some(e) = s.history.get(index) {
        return Ok((StatusCode::OK, Json(entry_body(&id, index, e))).into_response());
    }
    if index == s.history.len() && store.pending.contains(&id) {
        let body = json!({ "v": FORMAT_VERSION, "status": "pending", "poll": poll_path(&id, index) });
        return Ok((StatusCode::ACCEPTED, Json(body)).into_response());
    }
    Err(ApiError::not_found(&format!("entry {index} of session `{id}`")))
}

async fn persist(config: &ServiceConfig, session: &Session) -> ApiResult<()> {
    let Some(dir) = &config.data_dir else {
        return Ok(());
    };
    let io = |e: std::io::Error| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "storage", e.to_string());
    let tmp = dir.join(format!("{}.json.tmp", session.id));
    tokio::fs::write(&tmp, session.to_json()).await.map_err(io)?;
    tokio::fs::rename(&tmp, dir.join(format!("{}.json", session.id))).await.map_err(io)
}

#[derive(Debug)]
pub struct LoadReport {
    pub loaded: Vec<String>,
    /// Sessions whose stored history did not replay identically; they are
    /// still served as stored.
    pub diverged: Vec<String>,
}

fn load_dir(dir: &Path, store: &mut Store) -> std::io::Result<LoadReport> {
    std::fs::create_dir_all(dir)?;
    let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    let mut report = LoadReport {
        loaded: Vec::new(),
        diverged: Vec::new(),
    };
    for p in paths {
        let text = std::fs::read_to_string(&p)?;
        let session = Session::from_json(&text).map_err(|e| std::io::Error::other(format!("{}: {e}", p.display())))?;
        if session.replay().map(|r| r.history != session.history).unwrap_or(true) {
            report.diverged.push(session.id.clone());
        }
        if let Some(n) = session.id.strip_prefix('s').and_then(|n| n.parse::<u64>().ok()) {
            store.next_id = store.next_id.max(n);
        }
        report.loaded.push(session.id.clone());
        store.sessions.insert(session.id.clone(), session);
    }
    Ok(report)
}

impl AppState {
    /// Builds the state, loading and replaying stored sessions if a data
    /// directory is configured.
    pub fn new(config: ServiceConfig) -> std::io::Result<(Self, Option<LoadReport>)> {
        let mut store = Store::default();
        let report = match &config.data_dir {
            Some(dir) => Some(load_dir(dir, &mut store)?),
            None => None,
        };
        Ok((
            AppState {
                store: Arc::new(Mutex::new(store)),
                config: Arc::new(config),
            },
            report,
        ))
    }
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/maps", get(list_maps))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/foils", post(submit_foil))
        .route("/sessions/{id}/foils/{index}", get(poll_foil))
        .with_state(state)
}

pub async fn serve(listener: tokio::net::TcpListener, state: AppState) -> std::io::Result<()> {
    axum::serve(listener, router(state)).await
}
