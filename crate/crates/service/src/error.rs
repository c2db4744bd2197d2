use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),
    #[error("{0}")]
    Conflict(String),
    #[error("{0}")]
    Invalid(String),
    #[error("no new labels: {0}")]
    NoNewLabels(String),
    #[error("{0}")]
    Unauthorized(String),
    /// Transient failure; the request can be retried (with the same idempotency key).
    #[error("{0}")]
    Unavailable(String),
    #[error(transparent)]
    Core(#[from] redd_core::Error),
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Invalid(_) => "invalid",
            ServiceError::NoNewLabels(_) => "no_new_labels",
            ServiceError::Unauthorized(_) => "unauthorized",
            ServiceError::Unavailable(_) => "unavailable",
            ServiceError::Core(e) if e.is_validation() => "invalid",
            ServiceError::Core(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self.code() {
            "not_found" => StatusCode::NOT_FOUND,
            "conflict" => StatusCode::CONFLICT,
            "invalid" | "no_new_labels" => StatusCode::UNPROCESSABLE_ENTITY,
            "unauthorized" => StatusCode::UNAUTHORIZED,
            "unavailable" => StatusCode::SERVICE_UNAVAILABLE,
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }

    pub fn is_retryable(&self) -> bool {
        matches!(self, ServiceError::Unavailable(_))
    }
}

#[derive(Debug, Serialize)]
pub struct ErrorBody {
    pub error: &'static str,
    pub message: String,
    pub retryable: bool,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let body = ErrorBody {
            error: self.code(),
            message: self.to_string(),
            retryable: self.is_retryable(),
        };
        (self.status(), Json(body)).into_response()
    }
}
