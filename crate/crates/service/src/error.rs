use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use dropball_core::engine::EngineError;
use dropball_core::model::Violation;
use dropball_core::StoreError;
use serde::Serialize;

/// JSON error body: `{"error": "...", "violations": [{"path", "message"}]}`.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorBody {
    pub error: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub violations: Vec<ViolationBody>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ViolationBody {
    pub path: String,
    pub message: String,
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub message: String,
    pub violations: Vec<Violation>,
}

impl ApiError {
    pub fn new(status: StatusCode, message: impl Into<String>) -> Self {
        Self { status, message: message.into(), violations: Vec::new() }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, message)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        Self::new(StatusCode::CONFLICT, message)
    }

    pub fn unprocessable(message: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, message)
    }

    pub fn invalid(violations: Vec<Violation>) -> Self {
        let message = violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ");
        Self { status: StatusCode::BAD_REQUEST, message, violations }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            tracing::error!(status = %self.status, error = %self.message, "request failed");
        }
        let body = ErrorBody {
            error: self.message,
            violations: self
                .violations
                .into_iter()
                .map(|v| ViolationBody { path: v.path, message: v.message })
                .collect(),
        };
        (self.status, Json(body)).into_response()
    }
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        match e {
            StoreError::NotFound { .. } => Self::not_found(e.to_string()),
            StoreError::Referential { .. } => Self::not_found(e.to_string()),
            StoreError::Immutable { .. } => Self::conflict(e.to_string()),
            StoreError::Invalid(v) => Self::invalid(v),
            StoreError::BadId(_) => Self::bad_request(e.to_string()),
            StoreError::SchemaVersion { .. } | StoreError::Json { .. } | StoreError::Io(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
        }
    }
}

impl From<EngineError> for ApiError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Ended => Self::conflict(e.to_string()),
            EngineError::TimeRegression { .. }
            | EngineError::PrematureTimeout { .. }
            | EngineError::ZeroResponse { .. }
            | EngineError::InvalidTime(_) => Self::unprocessable(e.to_string()),
            EngineError::UnknownLevel(_) | EngineError::PlanMismatch { .. } | EngineError::Placement(_) => {
                Self::bad_request(e.to_string())
            }
            EngineError::NotStarted | EngineError::NotEnded | EngineError::Model(_) => {
                Self::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string())
            }
        }
    }
}
