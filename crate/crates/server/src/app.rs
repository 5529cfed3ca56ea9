use std::sync::Arc;

use axum::extract::rejection::{JsonRejection, PathRejection};
use axum::extract::{FromRequest, FromRequestParts, Request, State};
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::request::Parts;
use axum::http::{HeaderValue, Method, StatusCode};
use axum::middleware::{self, Next};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use tower_http::cors::{AllowOrigin, CorsLayer};

use recall_core::session::SessionMetrics;
use recall_core::store::{RecordId, RecordOrigin, SessionId};
use recall_core::{Closeness, ConversationSession, MemoryStore, SessionManager};

use crate::config::ApiConfig;
use crate::error::ApiError;

#[derive(Clone)]
pub struct AppState {
    pub store: Arc<MemoryStore>,
    pub sessions: Arc<SessionManager>,
    token: Option<Arc<str>>,
}

impl AppState {
    pub fn new(sessions: Arc<SessionManager>, api: &ApiConfig) -> Self {
        Self {
            store: sessions.store().clone(),
            sessions,
            token: api.bearer_token.as_deref().map(Arc::from),
        }
    }
}

/// JSON body whose parse failures answer with `INVALID_JSON`.
pub struct Body<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned> FromRequest<S> for Body<T> {
    type Rejection = ApiError;

    async fn from_request(req: Request, state: &S) -> Result<Self, ApiError> {
        Json::<T>::from_request(req, state)
            .await
            .map(|Json(v)| Body(v))
            .map_err(|e: JsonRejection| ApiError::invalid_json(e.body_text()))
    }
}

/// Path parameter whose parse failures answer with `INVALID_ARGUMENT`.
pub struct Param<T>(pub T);

impl<S: Send + Sync, T: DeserializeOwned + Send> FromRequestParts<S> for Param<T> {
    type Rejection = ApiError;

    async fn from_request_parts(parts: &mut Parts, state: &S) -> Result<Self, ApiError> {
        axum::extract::Path::<T>::from_request_parts(parts, state)
            .await
            .map(|axum::extract::Path(v)| Param(v))
            .map_err(|e: PathRejection| ApiError::invalid_argument(e.body_text()))
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Runs store and session calls off the async workers; provider calls block.
async fn blocking<T, E>(f: impl FnOnce() -> Result<T, E> + Send + 'static) -> ApiResult<T>
where
    T: Send + 'static,
    E: Into<ApiError> + Send + 'static,
{
    match tokio::task::spawn_blocking(f).await {
        Ok(result) => result.map_err(Into::into),
        Err(e) => {
            tracing::error!("request task failed: {e}");
            Err(ApiError::internal())
        }
    }
}

#[derive(Debug, Deserialize)]
pub struct NewRecord {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct NewPartner {
    pub partner_id: String,
    pub display_name: Option<String>,
    #[serde(default)]
    pub topic_preferences: Vec<String>,
    pub closeness: Closeness,
}

#[derive(Debug, Deserialize)]
pub struct PartnerUpdate {
    pub display_name: Option<String>,
    #[serde(default)]
    pub topic_preferences: Vec<String>,
    pub closeness: Closeness,
}

#[derive(Debug, Deserialize)]
pub struct NewSession {
    pub partner_id: String,
}

#[derive(Debug, Deserialize)]
pub struct TextBody {
    pub text: String,
}

#[derive(Debug, Deserialize)]
pub struct PickBody {
    pub index: usize,
}

#[derive(Debug, Deserialize)]
pub struct AdjustBody {
    pub index: usize,
    pub tag: String,
}

/// Session as served by `/state`: the stored session plus metrics once ended.
#[derive(Debug, Serialize)]
pub struct SessionView {
    #[serde(flatten)]
    pub session: ConversationSession,
    pub metrics: Option<SessionMetrics>,
}

impl From<ConversationSession> for SessionView {
    fn from(session: ConversationSession) -> Self {
        let metrics = SessionMetrics::from_session(&session);
        Self { session, metrics }
    }
}

pub fn router(state: AppState, api: &ApiConfig) -> Router {
    let mut app = Router::new()
        .route("/healthz", get(healthz))
        .route("/records", get(list_records).post(create_record))
        .route("/records/{id}", get(get_record).delete(delete_record))
        .route("/partners", get(list_partners).post(create_partner))
        .route(
            "/partners/{id}",
            get(get_partner).put(update_partner).delete(delete_partner),
        )
        .route("/sessions", get(list_sessions).post(create_session))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/utterance", post(utterance))
        .route("/sessions/{id}/starters", post(starters))
        .route("/sessions/{id}/pick", post(pick))
        .route("/sessions/{id}/adjust", post(adjust))
        .route("/sessions/{id}/manual", post(manual))
        .route("/sessions/{id}/end", post(end))
        .route("/sessions/{id}/archive", post(archive))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async {
            ApiError::new(
                StatusCode::METHOD_NOT_ALLOWED,
                "METHOD_NOT_ALLOWED",
                "method not allowed",
            )
        })
        .layer(middleware::from_fn_with_state(state.clone(), require_token))
        .with_state(state);

    if !api.cors_origins.is_empty() {
        let origins: Vec<HeaderValue> = api.cors_origins.iter().filter_map(|o| o.parse().ok()).collect();
        app = app.layer(
            CorsLayer::new()
                .allow_origin(AllowOrigin::list(origins))
                .allow_methods([Method::GET, Method::POST, Method::PUT, Method::DELETE])
                .allow_headers([CONTENT_TYPE, AUTHORIZATION]),
        );
    }
    app
}

async fn require_token(State(state): State<AppState>, req: Request, next: Next) -> Response {
    let Some(token) = &state.token else {
        return next.run(req).await;
    };
    if req.uri().path() == "/healthz" || req.method() == Method::OPTIONS {
        return next.run(req).await;
    }
    let ok = req
        .headers()
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .is_some_and(|t| t == &**token);
    if ok {
        next.run(req).await
    } else {
        ApiError::new(
            StatusCode::UNAUTHORIZED,
            "UNAUTHORIZED",
            "missing or wrong bearer token",
        )
        .into_response()
    }
}

async fn healthz() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

async fn list_records(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.store.list_records())
}

async fn create_record(State(s): State<AppState>, Body(body): Body<NewRecord>) -> ApiResult<impl IntoResponse> {
    let record = blocking(move || s.store.add_record(&body.text, RecordOrigin::Manual)).await?;
    Ok((StatusCode::CREATED, Json(record)))
}

async fn get_record(State(s): State<AppState>, Param(id): Param<u64>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.get_record(RecordId(id))?))
}

async fn delete_record(State(s): State<AppState>, Param(id): Param<u64>) -> ApiResult<StatusCode> {
    blocking(move || s.store.delete_record(RecordId(id))).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_partners(State(s): State<AppState>) -> impl IntoResponse {
    Json(s.store.list_personas())
}

async fn create_partner(State(s): State<AppState>, Body(body): Body<NewPartner>) -> ApiResult<impl IntoResponse> {
    let persona = blocking(move || {
        let name = body.display_name.unwrap_or_else(|| body.partner_id.clone());
        s.store
            .upsert_persona(&body.partner_id, &name, body.topic_preferences, body.closeness)
    })
    .await?;
    Ok((StatusCode::CREATED, Json(persona)))
}

async fn get_partner(State(s): State<AppState>, Param(id): Param<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(s.store.get_persona(&id)?))
}

async fn update_partner(
    State(s): State<AppState>,
    Param(id): Param<String>,
    Body(body): Body<PartnerUpdate>,
) -> ApiResult<impl IntoResponse> {
    let persona = blocking(move || {
        let name = match body.display_name {
            Some(name) => name,
            None => s.store.get_persona(&id)?.display_name,
        };
        s.store
            .upsert_persona(&id, &name, body.topic_preferences, body.closeness)
    })
    .await?;
    Ok(Json(persona))
}

async fn delete_partner(State(s): State<AppState>, Param(id): Param<String>) -> ApiResult<StatusCode> {
    blocking(move || s.store.delete_persona(&id)).await?;
    Ok(StatusCode::NO_CONTENT)
}

async fn list_sessions(State(s): State<AppState>) -> impl IntoResponse {
    Json(
        s.sessions
            .list_sessions()
            .into_iter()
            .map(SessionView::from)
            .collect::<Vec<_>>(),
    )
}

async fn create_session(State(s): State<AppState>, Body(body): Body<NewSession>) -> ApiResult<impl IntoResponse> {
    let session = blocking(move || s.sessions.start_session(&body.partner_id)).await?;
    Ok((StatusCode::CREATED, Json(SessionView::from(session))))
}

async fn session_state(State(s): State<AppState>, Param(id): Param<u64>) -> ApiResult<impl IntoResponse> {
    Ok(Json(SessionView::from(s.sessions.state(SessionId(id))?)))
}

async fn utterance(
    State(s): State<AppState>,
    Param(id): Param<u64>,
    Body(body): Body<TextBody>,
) -> ApiResult<impl IntoResponse> {
    let set = blocking(move || s.sessions.receive_partner_utterance(SessionId(id), &body.text)).await?;
    Ok(Json(set))
}

async fn starters(State(s): State<AppState>, Param(id): Param<u64>) -> ApiResult<impl IntoResponse> {
    let set = blocking(move || s.sessions.request_starters(SessionId(id))).await?;
    Ok(Json(set))
}

async fn pick(
    State(s): State<AppState>,
    Param(id): Param<u64>,
    Body(body): Body<PickBody>,
) -> ApiResult<impl IntoResponse> {
    let turn = blocking(move || s.sessions.pick_suggestion(SessionId(id), body.index)).await?;
    Ok(Json(turn))
}

async fn adjust(
    State(s): State<AppState>,
    Param(id): Param<u64>,
    Body(body): Body<AdjustBody>,
) -> ApiResult<impl IntoResponse> {
    let set = blocking(move || s.sessions.adjust_suggestion(SessionId(id), body.index, &body.tag)).await?;
    Ok(Json(set))
}

async fn manual(
    State(s): State<AppState>,
    Param(id): Param<u64>,
    Body(body): Body<TextBody>,
) -> ApiResult<impl IntoResponse> {
    let turn = blocking(move || s.sessions.manual_input(SessionId(id), &body.text)).await?;
    Ok(Json(turn))
}

async fn end(State(s): State<AppState>, Param(id): Param<u64>) -> ApiResult<impl IntoResponse> {
    let metrics = blocking(move || s.sessions.end_session(SessionId(id))).await?;
    Ok(Json(metrics))
}

async fn archive(State(s): State<AppState>, Param(id): Param<u64>) -> ApiResult<impl IntoResponse> {
    let record = blocking(move || s.sessions.archive_session(SessionId(id))).await?;
    Ok((StatusCode::CREATED, Json(record)))
}
