//! HTTP routes. Mutations need an `x-reviewer-token` header.

use std::future::Future;

use axum::extract::{Path, Query, State};
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::state::{DecisionRequest, OpenCalibration, RelevanceMark, RetrainRequest, Service};

pub const TOKEN_HEADER: &str = "x-reviewer-token";

pub fn router(service: Service) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/queues", get(list_queues))
        .route("/queues/{id}", get(get_queue))
        .route(
            "/queues/{id}/decisions",
            get(list_decisions).post(post_decision),
        )
        .route(
            "/topics/{id}/calibration",
            get(get_calibration).post(open_calibration),
        )
        .route("/topics/{id}/calibration/marks", post(post_mark))
        .route(
            "/topics/{id}/calibration/confirm",
            post(confirm_calibration),
        )
        .route("/models", get(get_registry))
        .route("/models/retrain", get(retrain_status).post(post_retrain))
        .route("/models/{v}/metrics", get(get_metrics))
        .with_state(service)
}

fn reviewer(service: &Service, headers: &HeaderMap) -> Result<String, ServiceError> {
    let token = headers
        .get(TOKEN_HEADER)
        .and_then(|v| v.to_str().ok())
        .ok_or_else(|| ServiceError::Unauthorized(format!("missing {TOKEN_HEADER} header")))?;
    service
        .config()
        .reviewer_for(token)
        .ok_or_else(|| ServiceError::Unauthorized("unknown reviewer token".into()))
}

/// Runs blocking work (fsync, training) off the async workers.
async fn blocking<T, F>(f: F) -> Result<T, ServiceError>
where
    F: FnOnce() -> Result<T, ServiceError> + Send + 'static,
    T: Send + 'static,
{
    tokio::task::spawn_blocking(f)
        .await
        .map_err(|e| ServiceError::Unavailable(format!("worker failed: {e}")))?
}

fn json<T: Serialize>(status: StatusCode, body: T) -> Response {
    (status, Json(body)).into_response()
}

async fn respond<T, Fut>(status: StatusCode, fut: Fut) -> Response
where
    T: Serialize,
    Fut: Future<Output = Result<T, ServiceError>>,
{
    match fut.await {
        Ok(body) => json(status, body),
        Err(e) => e.into_response(),
    }
}

fn parse_body<T: serde::de::DeserializeOwned>(body: &[u8]) -> Result<T, ServiceError> {
    serde_json::from_slice(body).map_err(|e| ServiceError::Invalid(format!("request body: {e}")))
}

async fn health() -> &'static str {
    "ok"
}

async fn list_queues(State(s): State<Service>) -> Response {
    json(StatusCode::OK, s.queue_ids())
}

#[derive(Debug, Deserialize)]
struct RankRange {
    first: Option<usize>,
    last: Option<usize>,
}

async fn get_queue(
    State(s): State<Service>,
    Path(id): Path<String>,
    Query(r): Query<RankRange>,
) -> Response {
    respond(StatusCode::OK, async move {
        let range = match (r.first, r.last) {
            (None, None) => None,
            (first, last) => Some((first.unwrap_or(1), last.unwrap_or(usize::MAX))),
        };
        s.get_queue(&id, range)
    })
    .await
}

async fn list_decisions(State(s): State<Service>, Path(id): Path<String>) -> Response {
    respond(StatusCode::OK, async move { s.queue_decisions(&id) }).await
}

async fn post_decision(
    State(s): State<Service>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    let result = async {
        let reviewer = reviewer(&s, &headers)?;
        let req: DecisionRequest = parse_body(&body)?;
        blocking(move || s.post_decision(&id, req, &reviewer)).await
    }
    .await;
    match result {
        Ok(r) if r.created => json(StatusCode::CREATED, r),
        Ok(r) => json(StatusCode::OK, r),
        Err(e) => e.into_response(),
    }
}

async fn get_calibration(State(s): State<Service>, Path(id): Path<String>) -> Response {
    respond(StatusCode::OK, async move { s.get_calibration(&id) }).await
}

async fn open_calibration(
    State(s): State<Service>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    respond(StatusCode::OK, async move {
        reviewer(&s, &headers)?;
        let req: OpenCalibration = if body.is_empty() {
            OpenCalibration::default()
        } else {
            parse_body(&body)?
        };
        blocking(move || s.open_calibration(&id, req)).await
    })
    .await
}

async fn post_mark(
    State(s): State<Service>,
    Path(id): Path<String>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    respond(StatusCode::OK, async move {
        reviewer(&s, &headers)?;
        let mark: RelevanceMark = parse_body(&body)?;
        blocking(move || s.post_relevance_mark(&id, mark)).await
    })
    .await
}

async fn confirm_calibration(
    State(s): State<Service>,
    Path(id): Path<String>,
    headers: HeaderMap,
) -> Response {
    respond(StatusCode::OK, async move {
        reviewer(&s, &headers)?;
        blocking(move || s.confirm_calibration(&id)).await
    })
    .await
}

async fn get_registry(State(s): State<Service>) -> Response {
    json(StatusCode::OK, s.registry())
}

async fn retrain_status(State(s): State<Service>) -> Response {
    json(StatusCode::OK, s.retrain_status())
}

async fn post_retrain(
    State(s): State<Service>,
    headers: HeaderMap,
    body: axum::body::Bytes,
) -> Response {
    respond(StatusCode::CREATED, async move {
        reviewer(&s, &headers)?;
        let req: RetrainRequest = parse_body(&body)?;
        blocking(move || s.post_retrain(req)).await
    })
    .await
}

#[derive(Debug, Deserialize)]
struct MetricsQuery {
    topic: String,
}

async fn get_metrics(
    State(s): State<Service>,
    Path(v): Path<u64>,
    Query(q): Query<MetricsQuery>,
) -> Response {
    respond(StatusCode::OK, async move {
        blocking(move || s.get_metrics(v, &q.topic)).await
    })
    .await
}

/// Serves until Ctrl-C.
pub async fn serve(service: Service) -> std::io::Result<()> {
    let addr = service.config().listen.clone();
    let listener = tokio::net::TcpListener::bind(&addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(service))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}
