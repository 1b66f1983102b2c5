//! JSON-over-HTTP front end for [`Service`].

use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use stepwise_core::SessionEvent;

use crate::service::{ResponseBody, Service, ServiceError};
use crate::store::SnapshotStore;

#[derive(Clone)]
struct AppState {
    service: Arc<Service>,
    snapshots: Option<SnapshotStore>,
}

pub struct ApiError(StatusCode, &'static str, String);

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, code) = match &e {
            ServiceError::UnknownSession(_) => (StatusCode::NOT_FOUND, "unknown_session"),
            ServiceError::UnknownQuestion(_) => (StatusCode::NOT_FOUND, "unknown_question"),
            ServiceError::InvalidEvent { rule: stepwise_core::Rule::TimestampOrder, .. } => {
                (StatusCode::CONFLICT, "order_violation")
            }
            ServiceError::InvalidEvent { .. } => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_event"),
            ServiceError::AlreadyResolved => (StatusCode::CONFLICT, "already_resolved"),
            ServiceError::InvalidResponse(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid_response"),
            ServiceError::StorageFailure(_) => (StatusCode::SERVICE_UNAVAILABLE, "storage_failure"),
            ServiceError::ProviderUnavailable(_) => (StatusCode::SERVICE_UNAVAILABLE, "provider_unavailable"),
        };
        ApiError(status, code, e.to_string())
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError(StatusCode::BAD_REQUEST, "bad_request", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.0, Json(json!({"error": self.1, "message": self.2}))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

/// Run blocking service work off the async executor.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ApiError(StatusCode::INTERNAL_SERVER_ERROR, "internal", e.to_string()))?
        .map_err(ApiError::from)
}

async fn create_session(State(app): State<AppState>) -> ApiResult<impl IntoResponse> {
    let id = blocking(move || app.service.create_session()).await?;
    Ok((StatusCode::CREATED, Json(json!({"session_id": id}))))
}

async fn append_events(
    State(app): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<Vec<SessionEvent>>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(events) = body?;
    let r = blocking(move || app.service.append_events(&id, events)).await?;
    Ok(Json(r))
}

#[derive(Deserialize)]
struct Since {
    #[serde(default)]
    since: u64,
}

async fn poll_questions(
    State(app): State<AppState>,
    Path(id): Path<String>,
    Query(q): Query<Since>,
) -> ApiResult<impl IntoResponse> {
    let timeout = app.service.poll_timeout();
    Ok(Json(app.service.poll_questions(&id, q.since, timeout).await?))
}

async fn submit_response(
    State(app): State<AppState>,
    Path(qid): Path<String>,
    body: Result<Json<ResponseBody>, JsonRejection>,
) -> ApiResult<impl IntoResponse> {
    let Json(body) = body?;
    Ok(Json(blocking(move || app.service.submit_response(&qid, body)).await?))
}

async fn documentation(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.service.documentation(&id)?))
}

async fn steps(State(app): State<AppState>, Path(id): Path<String>) -> ApiResult<impl IntoResponse> {
    Ok(Json(app.service.steps(&id)?))
}

async fn snapshot(State(app): State<AppState>, Path(reference): Path<String>) -> ApiResult<impl IntoResponse> {
    let not_found = || ApiError(StatusCode::NOT_FOUND, "unknown_snapshot", reference.clone());
    let store = app.snapshots.as_ref().ok_or_else(not_found)?;
    let path = store.resolve(&reference).ok_or_else(not_found)?;
    let bytes = std::fs::read(&path).map_err(|_| not_found())?;
    let mime = match path.extension().and_then(|e| e.to_str()) {
        Some("jpg" | "jpeg") => "image/jpeg",
        Some("webp") => "image/webp",
        Some("gif") => "image/gif",
        Some("png") => "image/png",
        _ => "application/octet-stream",
    };
    Ok(([(header::CONTENT_TYPE, mime)], bytes))
}

pub fn router(service: Arc<Service>, snapshots: Option<SnapshotStore>) -> Router {
    Router::new()
        .route("/sessions", post(create_session))
        .route("/sessions/{id}/events", post(append_events))
        .route("/sessions/{id}/questions", get(poll_questions))
        .route("/sessions/{id}/documentation", get(documentation))
        .route("/sessions/{id}/steps", get(steps))
        .route("/questions/{qid}/response", post(submit_response))
        .route("/snapshots/{reference}", get(snapshot))
        .with_state(AppState { service, snapshots })
}

/// Bind `addr` and serve until Ctrl-C.
pub async fn serve(router: Router, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!("listening on {}", listener.local_addr()?);
    axum::serve(listener, router)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
