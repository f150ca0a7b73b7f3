//! JSON-over-HTTP routes.

use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tower_http::services::ServeDir;

use crate::model::{FeedbackInput, QuestionCategory};
use crate::service::{ChatService, ServiceError};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    code: &'static str,
    message: String,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            code: "validation_error",
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let (status, code) = match &e {
            ServiceError::SessionNotFound(_) | ServiceError::TurnNotFound { .. } => {
                (StatusCode::NOT_FOUND, "not_found")
            }
            ServiceError::Validation(_) => (StatusCode::BAD_REQUEST, "validation_error"),
            ServiceError::Degraded(_) => (StatusCode::SERVICE_UNAVAILABLE, "service_degraded"),
            ServiceError::Persistence(_) => (StatusCode::INTERNAL_SERVER_ERROR, "persistence_failed"),
            ServiceError::Internal(_) => (StatusCode::INTERNAL_SERVER_ERROR, "internal_error"),
        };
        ApiError {
            status,
            code,
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        ApiError::bad_request(e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({ "error": self.code, "message": self.message })),
        )
            .into_response()
    }
}

type AppState = Arc<ChatService>;

async fn blocking<T, F>(svc: AppState, f: F) -> Result<T, ApiError>
where
    T: Send + 'static,
    F: FnOnce(&ChatService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&svc))
        .await
        .map_err(|e| ApiError::from(ServiceError::Internal(e.to_string())))?
        .map_err(ApiError::from)
}

async fn health() -> Json<serde_json::Value> {
    Json(json!({ "status": "ok" }))
}

async fn create_session(State(svc): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    let id = blocking(svc, |s| s.create_session()).await?;
    Ok((StatusCode::CREATED, Json(json!({ "session_id": id }))))
}

async fn get_session(
    State(svc): State<AppState>,
    Path(id): Path<String>,
) -> Result<impl IntoResponse, ApiError> {
    let session = blocking(svc, move |s| s.session(&id)).await?;
    Ok(Json(session))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct MessageBody {
    question: String,
}

async fn post_message(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<MessageBody>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    let reply = blocking(svc, move |s| s.post_message(&id, &body.question)).await?;
    Ok(Json(reply))
}

async fn post_feedback(
    State(svc): State<AppState>,
    Path(id): Path<String>,
    body: Result<Json<FeedbackInput>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(input) = body?;
    let record = blocking(svc, move |s| s.post_feedback(&id, input)).await?;
    Ok((StatusCode::CREATED, Json(json!({ "status": "stored", "feedback": record }))))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CategoryBody {
    category: String,
}

#[derive(Debug, Serialize)]
struct TagReply {
    session_id: String,
    turn: usize,
    category: QuestionCategory,
}

async fn tag_question(
    State(svc): State<AppState>,
    Path((id, turn)): Path<(String, usize)>,
    body: Result<Json<CategoryBody>, JsonRejection>,
) -> Result<impl IntoResponse, ApiError> {
    let Json(body) = body?;
    let category: QuestionCategory = body.category.parse().map_err(ApiError::bad_request)?;
    let reply = TagReply {
        session_id: id.clone(),
        turn,
        category,
    };
    blocking(svc, move |s| s.tag_question(&id, turn, category)).await?;
    Ok(Json(reply))
}

async fn stats(State(svc): State<AppState>) -> Result<impl IntoResponse, ApiError> {
    Ok(Json(blocking(svc, |s| Ok(s.stats())).await?))
}

/// API routes, with `static_dir` (if any) served for every other path.
pub fn router(service: Arc<ChatService>, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(get_session))
        .route("/sessions/{id}/messages", post(post_message))
        .route("/sessions/{id}/feedback", post(post_feedback))
        .route("/sessions/{id}/turns/{turn}/category", post(tag_question))
        .route("/stats", get(stats))
        .with_state(service);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir).append_index_html_on_directories(true)),
        None => api,
    }
}

/// Serves until ctrl-c.
pub async fn serve(
    listener: tokio::net::TcpListener,
    service: Arc<ChatService>,
    static_dir: Option<PathBuf>,
) -> std::io::Result<()> {
    let app = router(service, static_dir);
    axum::serve(listener, app)
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
