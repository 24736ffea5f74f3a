use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use ownership_core::learn::LearnError;
use ownership_core::model::{CandidateId, ModelError};
use ownership_core::persist::PersistError;
use ownership_core::Error;
use serde::Serialize;

/// JSON error body; `code` is stable, `message` is for people.
#[derive(Debug, Serialize)]
pub struct ApiError {
    #[serde(skip)]
    pub status: StatusCode,
    pub code: &'static str,
    pub message: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub decided_by: Option<CandidateId>,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        Self {
            status,
            code,
            message: message.into(),
            decided_by: None,
        }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let message = e.to_string();
        let (status, code) = match &e {
            Error::Model(m) => match m {
                ModelError::UnknownAsset(_)
                | ModelError::UnknownCandidate(_)
                | ModelError::UnknownOrgNode(_)
                | ModelError::UnknownRecommendation(_) => (StatusCode::NOT_FOUND, "not_found"),
                ModelError::StaleRecommendation { decided_by, .. } => {
                    return Self {
                        status: StatusCode::CONFLICT,
                        code: "stale_recommendation",
                        message,
                        decided_by: Some(decided_by.clone()),
                    }
                }
                ModelError::RedundantTransfer { .. } => (StatusCode::CONFLICT, "redundant_transfer"),
                _ => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            },
            Error::Learn(LearnError::EmptyTrainingSet) => (StatusCode::UNPROCESSABLE_ENTITY, "empty_training_set"),
            Error::Learn(_) => (StatusCode::UNPROCESSABLE_ENTITY, "invalid"),
            Error::NoModelForAssetType(_) => (StatusCode::CONFLICT, "no_model"),
            Error::Ingest(_) => (StatusCode::BAD_REQUEST, "bad_request"),
            Error::Persist(PersistError::StoreLocked) => (StatusCode::SERVICE_UNAVAILABLE, "store_locked"),
            Error::Persist(_) | Error::Sim(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        Self::new(status, code, message)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        if self.status.is_server_error() {
            log::error!("{}: {}", self.code, self.message);
        }
        (self.status, Json(self)).into_response()
    }
}
