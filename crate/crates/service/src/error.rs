use std::io;

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;
use thiserror::Error;

pub type Result<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("unknown user {0:?}")]
    UnknownUser(String),

    #[error("user {0:?} has no trained model")]
    NotTrained(String),

    #[error("{have} enrolled attempts, {need} required")]
    InsufficientEnrollment { have: usize, need: usize },

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    #[error("store: {0}")]
    Store(String),

    #[error("server: {0}")]
    Server(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Core(keydetect_core::Error),
}

impl From<keydetect_core::Error> for ServiceError {
    fn from(e: keydetect_core::Error) -> Self {
        match e {
            keydetect_core::Error::MalformedTrace(msg) => ServiceError::MalformedTrace(msg),
            other => ServiceError::Core(other),
        }
    }
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::MalformedTrace(_) => "malformed_trace",
            ServiceError::UnknownUser(_) => "unknown_user",
            ServiceError::NotTrained(_) => "not_trained",
            ServiceError::InsufficientEnrollment { .. } => "insufficient_enrollment",
            ServiceError::InvalidRequest(_) => "invalid_request",
            ServiceError::Store(_) | ServiceError::Server(_) | ServiceError::Io(_) | ServiceError::Core(_) => "internal",
        }
    }

    pub fn status(&self) -> StatusCode {
        match self {
            ServiceError::MalformedTrace(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::UnknownUser(_) => StatusCode::NOT_FOUND,
            ServiceError::NotTrained(_) | ServiceError::InsufficientEnrollment { .. } => StatusCode::CONFLICT,
            ServiceError::InvalidRequest(_) => StatusCode::BAD_REQUEST,
            ServiceError::Store(_) | ServiceError::Server(_) | ServiceError::Io(_) | ServiceError::Core(_) => StatusCode::INTERNAL_SERVER_ERROR,
        }
    }
}

#[derive(Debug, Serialize)]
struct ErrorBody<'a> {
    error_code: &'a str,
    message: String,
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        if self.status().is_server_error() {
            log::error!("{self}");
        }
        let body = ErrorBody {
            error_code: self.code(),
            message: self.to_string(),
        };
        (self.status(), Json(body)).into_response()
    }
}
