use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use rarepool_core::annotation::Annotation;
use serde::Deserialize;

use crate::error::ServiceError;
use crate::session::SessionConfig;
use crate::state::ServiceState;

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match &self {
            ServiceError::NotFound(_) => StatusCode::NOT_FOUND,
            ServiceError::Conflict(_) => StatusCode::CONFLICT,
            ServiceError::Validation(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::BadRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(serde_json::json!({ "error": self.to_string() }))).into_response()
    }
}

type Shared = Arc<ServiceState>;

async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> Result<T, ServiceError> + Send + 'static,
) -> Result<T, ServiceError> {
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Internal(e.to_string()))?
}

async fn create(State(state): State<Shared>, body: Result<Json<SessionConfig>, axum::extract::rejection::JsonRejection>) -> Response {
    let config = match body {
        Ok(Json(c)) => c,
        Err(e) => return ServiceError::BadRequest(e.body_text()).into_response(),
    };
    match blocking(move || state.create_session(config)).await {
        Ok(created) => (StatusCode::CREATED, Json(created)).into_response(),
        Err(e) => e.into_response(),
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    worker: Option<String>,
}

async fn next(State(state): State<Shared>, Path(id): Path<String>, Query(q): Query<NextQuery>) -> Response {
    match blocking(move || state.next_documents(&id, q.worker.as_deref())).await {
        Ok(batch) => Json(batch).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn annotate(
    State(state): State<Shared>,
    Path(id): Path<String>,
    body: Result<Json<Annotation>, axum::extract::rejection::JsonRejection>,
) -> Response {
    let annotation = match body {
        Ok(Json(a)) => a,
        Err(e) => return ServiceError::Validation(e.body_text()).into_response(),
    };
    match blocking(move || state.submit_annotation(&id, annotation)).await {
        Ok(ack) => Json(ack).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn session_state(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match blocking(move || state.session_state(&id)).await {
        Ok(s) => Json(s).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn export(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match blocking(move || state.export(&id)).await {
        Ok(body) => ([(header::CONTENT_TYPE, "application/x-ndjson")], body).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn abort(State(state): State<Shared>, Path(id): Path<String>) -> Response {
    match blocking(move || state.abort(&id)).await {
        Ok(s) => Json(s).into_response(),
        Err(e) => e.into_response(),
    }
}

async fn list(State(state): State<Shared>) -> Response {
    Json(state.session_ids()).into_response()
}

pub fn router(state: Arc<ServiceState>) -> Router {
    Router::new()
        .route("/sessions", post(create).get(list))
        .route("/sessions/{id}/next", get(next))
        .route("/sessions/{id}/annotations", post(annotate))
        .route("/sessions/{id}/state", get(session_state))
        .route("/sessions/{id}/export", get(export))
        .route("/sessions/{id}/abort", post(abort))
        .with_state(state)
}

/// Serves until ctrl-c. `on_bound` receives the bound address, which is
/// useful when binding port 0.
pub async fn serve(
    state: Arc<ServiceState>,
    addr: SocketAddr,
    on_bound: impl FnOnce(SocketAddr),
) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    on_bound(listener.local_addr()?);
    axum::serve(listener, router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
