use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde_json::json;
use thiserror::Error;

use csi_core::orchestrator::OrchestratorError;

#[derive(Debug, Error)]
pub enum ApiError {
    #[error("unknown session {0}")]
    SessionNotFound(String),
    #[error("missing or invalid token")]
    Unauthorized,
    #[error("{0}")]
    Backend(String),
    #[error(transparent)]
    Orchestrator(#[from] OrchestratorError),
}

impl ApiError {
    pub fn status(&self) -> StatusCode {
        match self {
            ApiError::SessionNotFound(_) => StatusCode::NOT_FOUND,
            ApiError::Unauthorized => StatusCode::UNAUTHORIZED,
            ApiError::Backend(_) => StatusCode::BAD_GATEWAY,
            ApiError::Orchestrator(e) => match e {
                OrchestratorError::ConfigInvalid(_) | OrchestratorError::Partition(_) => StatusCode::UNPROCESSABLE_ENTITY,
                OrchestratorError::QuestionNotFound(_) => StatusCode::NOT_FOUND,
                OrchestratorError::BadState { .. } | OrchestratorError::DeadlinePassed { .. } => StatusCode::CONFLICT,
                OrchestratorError::NotJoined(_) => StatusCode::FORBIDDEN,
                OrchestratorError::MessageInvalid(_) => StatusCode::BAD_REQUEST,
            },
        }
    }

    fn code(&self) -> &'static str {
        match self {
            ApiError::SessionNotFound(_) => "session_not_found",
            ApiError::Unauthorized => "unauthorized",
            ApiError::Backend(_) => "backend_unavailable",
            ApiError::Orchestrator(e) => match e {
                OrchestratorError::ConfigInvalid(_) => "config_invalid",
                OrchestratorError::Partition(_) => "partition_infeasible",
                OrchestratorError::QuestionNotFound(_) => "question_not_found",
                OrchestratorError::BadState { .. } => "bad_state",
                OrchestratorError::DeadlinePassed { .. } => "deadline_passed",
                OrchestratorError::NotJoined(_) => "not_joined",
                OrchestratorError::MessageInvalid(_) => "message_invalid",
            },
        }
    }

    pub fn body(&self) -> serde_json::Value {
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        if let ApiError::Orchestrator(OrchestratorError::ConfigInvalid(v)) = self {
            body["violations"] = json!(v);
        }
        body
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self.body())).into_response()
    }
}
