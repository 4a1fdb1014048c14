//! HTTP API over one model: ingestion, queries, KPI values, dashboards,
//! widget data and the agent.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path as UrlPath, Query as UrlQuery, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{Html, IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use climadash_core::agent::{
    answer, apply_command, parse_utterance, AgentCommand, AgentError, AgentReply, NoMatch,
    RetrievalIndex, ScoredPassage,
};
use climadash_core::codegen::{default_dashboard, CodegenError, DEFAULT_DASHBOARD_ID};
use climadash_core::dashboard::{
    apply_mutation, widget_data, Color, Dashboard, DashboardError, DashboardStore,
    DashboardSummary, Mutation, Rect, SourceRef, Widget, WidgetData, WidgetSpec,
};
use climadash_core::dsl::Model;
use climadash_core::ingest::{IngestError, IngestResult, Query, Record, ReplayReport, Store};
use climadash_core::kpi::{evaluate_kpi, KpiValue};
use climadash_core::time::parse_rfc3339_ms;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize};
use serde_json::{json, Value};
use thiserror::Error;
use tower_http::services::ServeDir;

const DEFAULT_K: usize = 5;
const MAX_K: usize = 100;

/// Everything a running service needs. Journals are replayed before the
/// state exists, so handlers never see a partially loaded store.
pub struct AppState {
    pub model: Arc<Model>,
    pub store: Store,
    pub dashboards: DashboardStore,
    pub index: RetrievalIndex,
}

#[derive(Debug, Error)]
pub enum OpenError {
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error(transparent)]
    Dashboard(#[from] DashboardError),
    #[error(transparent)]
    Codegen(#[from] CodegenError),
}

impl AppState {
    /// Opens journals and dashboards under `data_dir` and seeds the
    /// generated default dashboard if it is missing.
    pub fn open(
        model: Arc<Model>,
        data_dir: &Path,
        index: RetrievalIndex,
    ) -> Result<(Self, ReplayReport), OpenError> {
        let (store, report) = Store::open(model.clone(), data_dir)?;
        let dashboards = DashboardStore::open(&data_dir.join("dashboards"))?;
        if dashboards.get(DEFAULT_DASHBOARD_ID).is_none() {
            dashboards.insert(default_dashboard(&model)?)?;
        }
        let state = Self {
            model,
            store,
            dashboards,
            index,
        };
        Ok((state, report))
    }
}

type Shared = Arc<AppState>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    current: Option<Box<Dashboard>>,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
            current: None,
        }
    }

    fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    fn internal(message: impl Into<String>) -> Self {
        let message = message.into();
        log::error!("{message}");
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let mut body = json!({ "error": self.message });
        if let Some(current) = self.current {
            body["current"] = serde_json::to_value(&*current).unwrap_or(Value::Null);
        }
        (self.status, Json(body)).into_response()
    }
}

impl From<DashboardError> for ApiError {
    fn from(e: DashboardError) -> Self {
        let message = e.to_string();
        match e {
            DashboardError::Conflict { current, .. } => Self {
                status: StatusCode::CONFLICT,
                message,
                current: Some(current),
            },
            DashboardError::NotFound(_) | DashboardError::UnknownWidget(_) => Self::not_found(message),
            DashboardError::AlreadyExists(_) => Self::new(StatusCode::CONFLICT, message),
            DashboardError::Geometry(_) => Self::new(StatusCode::UNPROCESSABLE_ENTITY, message),
            DashboardError::UnknownSource(_) | DashboardError::Invalid(_) => Self::bad_request(message),
            DashboardError::Io { .. } => Self::internal(message),
        }
    }
}

impl From<IngestError> for ApiError {
    fn from(e: IngestError) -> Self {
        let message = e.to_string();
        match e {
            IngestError::UnknownDatasource(_) => Self::not_found(message),
            IngestError::Io { .. } => Self::internal(message),
            _ => Self::bad_request(message),
        }
    }
}

impl From<AgentError> for ApiError {
    fn from(e: AgentError) -> Self {
        match e {
            AgentError::Dashboard(e) => e.into(),
            AgentError::NoWidget(_) | AgentError::NoWidgetTitled(_) | AgentError::UnknownKpi(_) => {
                Self::not_found(e.to_string())
            }
            AgentError::BadGroup { .. } | AgentError::Incomplete(_) => Self::bad_request(e.to_string()),
        }
    }
}

type ApiResult<T> = Result<T, ApiError>;
type Params = UrlQuery<HashMap<String, String>>;

fn parse_body<T: DeserializeOwned>(bytes: &[u8]) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::bad_request(format!("invalid request body: {e}")))
}

/// Epoch milliseconds, or an RFC 3339 timestamp for convenience.
fn time_param(params: &HashMap<String, String>, name: &str) -> ApiResult<Option<i64>> {
    params
        .get(name)
        .map(|raw| {
            raw.trim().parse::<i64>().ok().or_else(|| parse_rfc3339_ms(raw)).ok_or_else(|| {
                ApiError::bad_request(format!("`{name}` must be epoch milliseconds or an RFC 3339 time"))
            })
        })
        .transpose()
}

fn version_param(params: &HashMap<String, String>) -> ApiResult<Option<u64>> {
    params
        .get("expected_version")
        .map(|raw| {
            raw.parse()
                .map_err(|_| ApiError::bad_request("`expected_version` must be a positive integer"))
        })
        .transpose()
}

fn dashboard(state: &AppState, id: &str) -> ApiResult<Arc<Dashboard>> {
    state
        .dashboards
        .get(id)
        .ok_or_else(|| DashboardError::NotFound(id.to_string()).into())
}

#[derive(Debug, Serialize)]
struct MutationResponse {
    dashboard: Dashboard,
    #[serde(skip_serializing_if = "Option::is_none")]
    widget_id: Option<String>,
}

fn mutate(state: &AppState, id: &str, expected: u64, mutation: &Mutation) -> ApiResult<Json<MutationResponse>> {
    let outcome = state.dashboards.mutate(id, expected, mutation, &state.model)?;
    Ok(Json(MutationResponse {
        dashboard: (*outcome.dashboard).clone(),
        widget_id: outcome.widget_id,
    }))
}

// ------------------------------------------------------------- records ---

async fn ingest(
    State(state): State<Shared>,
    UrlPath(datasource): UrlPath<String>,
    headers: HeaderMap,
    body: Bytes,
) -> ApiResult<Json<IngestResult>> {
    state.store.entity(&datasource)?;
    let csv = headers
        .get(header::CONTENT_TYPE)
        .and_then(|v| v.to_str().ok())
        .is_some_and(|ct| ct.starts_with("text/csv"));
    // Journal writes hit the disk; keep them off the async workers.
    tokio::task::spawn_blocking(move || {
        let result = if csv {
            let text = std::str::from_utf8(&body).map_err(|_| ApiError::bad_request("CSV body is not UTF-8"))?;
            state.store.ingest_csv(&datasource, text)?
        } else {
            let records = match parse_body::<Value>(&body)? {
                Value::Array(items) => items,
                one @ Value::Object(_) => vec![one],
                _ => return Err(ApiError::bad_request("expected a JSON array of records")),
            };
            state.store.ingest_batch(&datasource, &records)?
        };
        Ok(Json(result))
    })
    .await
    .map_err(|e| ApiError::internal(format!("ingest task failed: {e}")))?
}

async fn data(
    State(state): State<Shared>,
    UrlPath(datasource): UrlPath<String>,
    UrlQuery(params): Params,
) -> ApiResult<Json<Vec<Record>>> {
    let limit = params
        .get("limit")
        .map(|raw| raw.parse::<usize>().map_err(|_| ApiError::bad_request("`limit` must be a positive integer")))
        .transpose()?;
    let query = Query {
        from: time_param(&params, "from")?,
        to: time_param(&params, "to")?,
        limit,
    };
    Ok(Json(state.store.query(&datasource, query)?))
}

async fn kpi(
    State(state): State<Shared>,
    UrlPath(name): UrlPath<String>,
    UrlQuery(params): Params,
) -> ApiResult<Json<KpiValue>> {
    let def = state
        .model
        .kpi(&name)
        .ok_or_else(|| ApiError::not_found(format!("no KPI `{name}`")))?;
    let at = time_param(&params, "at")?;
    Ok(Json(evaluate_kpi(def, &state.store, at)))
}

async fn model(State(state): State<Shared>) -> Json<Model> {
    Json((*state.model).clone())
}

// ---------------------------------------------------------- dashboards ---

async fn list_dashboards(State(state): State<Shared>) -> Json<Vec<DashboardSummary>> {
    Json(state.dashboards.list())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CreateDashboard {
    name: String,
}

async fn create_dashboard(State(state): State<Shared>, body: Bytes) -> ApiResult<(StatusCode, Json<Dashboard>)> {
    let req: CreateDashboard = parse_body(&body)?;
    let d = state.dashboards.create(&req.name)?;
    Ok((StatusCode::CREATED, Json((*d).clone())))
}

async fn get_dashboard(State(state): State<Shared>, UrlPath(id): UrlPath<String>) -> ApiResult<Json<Dashboard>> {
    Ok(Json((*dashboard(&state, &id)?).clone()))
}

/// Either one explicit mutation, or a new name and/or widget list.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PutDashboard {
    expected_version: u64,
    #[serde(default)]
    name: Option<String>,
    #[serde(default)]
    widgets: Option<Vec<Widget>>,
    #[serde(default)]
    mutation: Option<Mutation>,
}

async fn put_dashboard(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let req: PutDashboard = parse_body(&body)?;
    let current = dashboard(&state, &id)?;
    let mutation = match (req.mutation, req.widgets, req.name) {
        (Some(m), None, None) => m,
        (Some(_), _, _) => return Err(ApiError::bad_request("give either `mutation` or `name`/`widgets`, not both")),
        (None, Some(widgets), name) => Mutation::Replace {
            name: name.unwrap_or_else(|| current.name.clone()),
            widgets,
        },
        (None, None, Some(name)) => Mutation::RenameDashboard { name },
        (None, None, None) => return Err(ApiError::bad_request("nothing to change")),
    };
    mutate(&state, &id, req.expected_version, &mutation)
}

async fn delete_dashboard(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    UrlQuery(params): Params,
) -> ApiResult<StatusCode> {
    state.dashboards.delete(&id, version_param(&params)?)?;
    Ok(StatusCode::NO_CONTENT)
}

async fn add_widget(
    State(state): State<Shared>,
    UrlPath(id): UrlPath<String>,
    body: Bytes,
) -> ApiResult<(StatusCode, Json<MutationResponse>)> {
    let mut fields: serde_json::Map<String, Value> = parse_body(&body)?;
    let expected = match fields.remove("expected_version") {
        None => None,
        Some(v) => Some(
            v.as_u64()
                .ok_or_else(|| ApiError::bad_request("`expected_version` must be a positive integer"))?,
        ),
    };
    let spec: WidgetSpec = serde_json::from_value(Value::Object(fields))
        .map_err(|e| ApiError::bad_request(format!("invalid widget: {e}")))?;
    let expected = match expected {
        Some(v) => v,
        None => dashboard(&state, &id)?.version,
    };
    let response = mutate(&state, &id, expected, &Mutation::AddWidget(spec))?;
    Ok((StatusCode::CREATED, response))
}

/// Distinguishes an absent field from an explicit `null`.
fn present<'de, D: Deserializer<'de>, T: Deserialize<'de>>(d: D) -> Result<Option<T>, D::Error> {
    T::deserialize(d).map(Some)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct WidgetPatch {
    #[serde(default)]
    expected_version: Option<u64>,
    #[serde(default)]
    x: Option<u32>,
    #[serde(default)]
    y: Option<u32>,
    #[serde(default)]
    w: Option<u32>,
    #[serde(default)]
    h: Option<u32>,
    #[serde(default)]
    title: Option<String>,
    #[serde(default, deserialize_with = "present")]
    color: Option<Option<Color>>,
}

async fn patch_widget(
    State(state): State<Shared>,
    UrlPath((id, wid)): UrlPath<(String, String)>,
    body: Bytes,
) -> ApiResult<Json<MutationResponse>> {
    let patch: WidgetPatch = parse_body(&body)?;
    let current = dashboard(&state, &id)?;
    let widget = current
        .widget(&wid)
        .ok_or_else(|| ApiError::from(DashboardError::UnknownWidget(wid.clone())))?;
    let mut mutations = Vec::new();
    if patch.x.is_some() || patch.y.is_some() || patch.w.is_some() || patch.h.is_some() {
        let l = widget.layout;
        let layout = Rect::new(
            patch.x.unwrap_or(l.x),
            patch.y.unwrap_or(l.y),
            patch.w.unwrap_or(l.w),
            patch.h.unwrap_or(l.h),
        );
        mutations.push(Mutation::Relayout { widget: wid.clone(), layout });
    }
    if let Some(title) = patch.title {
        mutations.push(Mutation::Retitle { widget: wid.clone(), title });
    }
    if let Some(color) = patch.color {
        mutations.push(Mutation::Recolor { widget: wid.clone(), color });
    }
    let expected = patch.expected_version.unwrap_or(current.version);
    match mutations.len() {
        0 => Err(ApiError::bad_request("nothing to change")),
        1 => mutate(&state, &id, expected, &mutations[0]),
        _ => {
            // Several edits land as one version: apply them to a copy and
            // store the result wholesale.
            if expected != current.version {
                return Err(DashboardError::Conflict {
                    expected,
                    current: Box::new((*current).clone()),
                }
                .into());
            }
            let mut next = (*current).clone();
            for m in &mutations {
                next = apply_mutation(&next, m, &state.model)?.0;
            }
            let combined = Mutation::Replace {
                name: next.name,
                widgets: next.widgets,
            };
            mutate(&state, &id, expected, &combined)
        }
    }
}

async fn delete_widget(
    State(state): State<Shared>,
    UrlPath((id, wid)): UrlPath<(String, String)>,
    UrlQuery(params): Params,
) -> ApiResult<Json<MutationResponse>> {
    let expected = match version_param(&params)? {
        Some(v) => v,
        None => dashboard(&state, &id)?.version,
    };
    mutate(&state, &id, expected, &Mutation::RemoveWidget { widget: wid })
}

async fn widget_payload(
    State(state): State<Shared>,
    UrlPath(wid): UrlPath<String>,
    UrlQuery(params): Params,
) -> ApiResult<Json<WidgetData>> {
    let (_, widget) = state
        .dashboards
        .find_widget(&wid)
        .ok_or_else(|| ApiError::from(DashboardError::UnknownWidget(wid.clone())))?;
    let at = time_param(&params, "at")?;
    Ok(Json(widget_data(&widget, &state.model, &state.store, at)))
}

// --------------------------------------------------------------- agent ---

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CommandRequest {
    dashboard_id: String,
    utterance: String,
    #[serde(default)]
    at: Option<i64>,
}

#[derive(Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
enum CommandResponse {
    Applied {
        command: AgentCommand,
        #[serde(flatten)]
        reply: Box<AgentReply>,
    },
    NoMatch(NoMatch),
}

async fn agent_command(State(state): State<Shared>, body: Bytes) -> ApiResult<Json<CommandResponse>> {
    let req: CommandRequest = parse_body(&body)?;
    let current = dashboard(&state, &req.dashboard_id)?;
    let titles: Vec<String> = current.widgets.iter().map(|w| w.config.title.clone()).collect();
    let sources = SourceRef::all(&state.model);
    let command = match parse_utterance(&req.utterance, &sources, &titles) {
        Ok(command) => command,
        Err(no_match) => return Ok(Json(CommandResponse::NoMatch(no_match))),
    };
    let reply = apply_command(&command, &state.dashboards, &req.dashboard_id, &state.model, &state.store, req.at)?;
    Ok(Json(CommandResponse::Applied { command, reply: Box::new(reply) }))
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AskRequest {
    question: String,
    #[serde(default)]
    k: Option<usize>,
}

async fn agent_ask(State(state): State<Shared>, body: Bytes) -> ApiResult<Json<Vec<ScoredPassage>>> {
    let req: AskRequest = parse_body(&body)?;
    if req.question.trim().is_empty() {
        return Err(ApiError::bad_request("question is empty"));
    }
    let k = req.k.unwrap_or(DEFAULT_K).min(MAX_K);
    Ok(Json(answer(&req.question, &state.index, k)))
}

// -------------------------------------------------------------- router ---

async fn no_route() -> ApiError {
    ApiError::not_found("no such endpoint")
}

async fn index_page() -> Html<&'static str> {
    Html(include_str!("../www/index.html"))
}

/// The full service. Static files come from `static_dir` when given,
/// otherwise a built-in page is served at `/`.
pub fn router(state: Arc<AppState>, static_dir: Option<&Path>) -> Router {
    let api = Router::new()
        .route("/ingest/{datasource}", post(ingest))
        .route("/data/{datasource}", get(data))
        .route("/kpi/{name}", get(kpi))
        .route("/model", get(model))
        .route("/dashboards", get(list_dashboards).post(create_dashboard))
        .route(
            "/dashboards/{id}",
            get(get_dashboard).put(put_dashboard).delete(delete_dashboard),
        )
        .route("/dashboards/{id}/widgets", post(add_widget))
        .route("/dashboards/{id}/widgets/{wid}", patch(patch_widget).delete(delete_widget))
        .route("/widgets/{wid}/data", get(widget_payload))
        .route("/agent/command", post(agent_command))
        .route("/agent/ask", post(agent_ask))
        .fallback(no_route);
    let app = Router::new().nest("/api/v1", api).with_state(state);
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app.route("/", get(index_page)),
    }
}

/// Serves until Ctrl-C.
pub async fn serve(
    listener: tokio::net::TcpListener,
    state: Arc<AppState>,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let app = router(state, static_dir.as_deref());
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
