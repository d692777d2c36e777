use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use primscene_core::backends::wire::ErrorBody;
use primscene_core::Error;

/// Error response carrying `{"error": {"code", "message"}}`.
#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        ApiError {
            status,
            code,
            message: message.into(),
        }
    }

    pub fn not_found(what: impl Into<String>) -> Self {
        ApiError::new(StatusCode::NOT_FOUND, "not_found", what)
    }

    pub fn conflict(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::CONFLICT, "scene_busy", message)
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "invalid_spec", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        match e {
            Error::InvalidSpec(m) if m == "no objects queued" => {
                ApiError::new(StatusCode::UNPROCESSABLE_ENTITY, "no_objects_queued", m)
            }
            Error::InvalidSpec(_) | Error::DegeneratePrimitive(_) => ApiError::invalid(message),
            Error::IndexOutOfRange { .. } => ApiError::new(StatusCode::NOT_FOUND, "frame_not_found", message),
            Error::Backend(_) => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "backend_error", message),
            _ => ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, "pipeline_error", message),
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(ErrorBody::new(self.code, self.message))).into_response()
    }
}
