use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::Json;
use serde::Serialize;

use recall_core::generation::GenerationError;
use recall_core::prompt::PromptError;
use recall_core::session::SessionError;
use recall_core::store::StoreError;

/// Every code the API can answer with. Codes are never renamed or reused.
pub const CODES: &[&str] = &[
    "EMPTY_TEXT",
    "TEXT_TOO_LONG",
    "TOO_MANY_TOPICS",
    "INVALID_TOPIC",
    "INVALID_ARGUMENT",
    "INVALID_JSON",
    "NOT_FOUND",
    "METHOD_NOT_ALLOWED",
    "UNAUTHORIZED",
    "UNKNOWN_PARTNER",
    "UNKNOWN_SESSION",
    "BUSY",
    "SESSION_ENDED",
    "ALREADY_ENDED",
    "SESSION_ACTIVE",
    "ALREADY_ARCHIVED",
    "SESSION_EMPTY",
    "NO_PENDING",
    "INDEX_OUT_OF_RANGE",
    "UNKNOWN_TAG",
    "NO_STARTERS",
    "PROVIDER_TIMEOUT",
    "PROVIDER_REFUSAL",
    "RETRIES_EXHAUSTED",
    "UNPARSEABLE_OUTPUT",
    "STORE_UNAVAILABLE",
    "INTERNAL",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ApiError {
    pub code: &'static str,
    pub message: String,
    pub http_status: u16,
}

impl ApiError {
    pub fn new(status: StatusCode, code: &'static str, message: impl Into<String>) -> Self {
        debug_assert!(CODES.contains(&code), "unregistered code {code}");
        Self {
            code,
            message: message.into(),
            http_status: status.as_u16(),
        }
    }

    pub fn invalid_json(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "INVALID_JSON", message)
    }

    pub fn invalid_argument(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "INVALID_ARGUMENT", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "NOT_FOUND", message)
    }

    pub fn internal() -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "INTERNAL", "internal error")
    }

    pub fn status(&self) -> StatusCode {
        StatusCode::from_u16(self.http_status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR)
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status(), Json(self)).into_response()
    }
}

/// Message of `e` followed by those of its sources.
fn chain(e: &dyn std::error::Error) -> String {
    let mut out = e.to_string();
    let mut next = e.source();
    while let Some(cause) = next {
        out.push_str(": ");
        out.push_str(&cause.to_string());
        next = cause.source();
    }
    out
}

impl From<StoreError> for ApiError {
    fn from(e: StoreError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match e {
            StoreError::EmptyText => Self::new(S::BAD_REQUEST, "EMPTY_TEXT", message),
            StoreError::TextTooLong { .. } => Self::new(S::BAD_REQUEST, "TEXT_TOO_LONG", message),
            StoreError::TooManyTopics { .. } => Self::new(S::BAD_REQUEST, "TOO_MANY_TOPICS", message),
            StoreError::InvalidTopic(_) => Self::new(S::BAD_REQUEST, "INVALID_TOPIC", message),
            StoreError::EmptyPartnerId => Self::invalid_argument(message),
            StoreError::NotFound { .. } => Self::not_found(message),
            StoreError::UnsupportedVersion { .. } | StoreError::Corrupt { .. } | StoreError::Io { .. } => {
                tracing::error!("store failure: {}", chain(&e));
                Self::new(
                    S::SERVICE_UNAVAILABLE,
                    "STORE_UNAVAILABLE",
                    "the store could not be written",
                )
            }
        }
    }
}

impl From<GenerationError> for ApiError {
    fn from(e: GenerationError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match e {
            GenerationError::ProviderTimeout => Self::new(S::GATEWAY_TIMEOUT, "PROVIDER_TIMEOUT", message),
            GenerationError::ProviderRefusal(_) => Self::new(S::BAD_GATEWAY, "PROVIDER_REFUSAL", message),
            GenerationError::RetriesExhausted { .. } => Self::new(S::SERVICE_UNAVAILABLE, "RETRIES_EXHAUSTED", message),
            GenerationError::UnparseableOutput => Self::new(S::BAD_GATEWAY, "UNPARSEABLE_OUTPUT", message),
            GenerationError::InvalidConfig(_) => {
                tracing::error!("{message}");
                Self::internal()
            }
        }
    }
}

impl From<PromptError> for ApiError {
    fn from(e: PromptError) -> Self {
        match e {
            PromptError::NoStarters => Self::new(StatusCode::CONFLICT, "NO_STARTERS", e.to_string()),
            PromptError::InvalidArgument(_) => Self::invalid_argument(e.to_string()),
            other => {
                tracing::error!("prompt failure: {other}");
                Self::internal()
            }
        }
    }
}

impl From<SessionError> for ApiError {
    fn from(e: SessionError) -> Self {
        use StatusCode as S;
        let message = e.to_string();
        match e {
            SessionError::UnknownPartner(_) => Self::new(S::NOT_FOUND, "UNKNOWN_PARTNER", message),
            SessionError::UnknownSession(_) => Self::new(S::NOT_FOUND, "UNKNOWN_SESSION", message),
            SessionError::Busy(_) => Self::new(S::CONFLICT, "BUSY", message),
            SessionError::SessionEnded(_) => Self::new(S::CONFLICT, "SESSION_ENDED", message),
            SessionError::AlreadyEnded(_) => Self::new(S::CONFLICT, "ALREADY_ENDED", message),
            SessionError::SessionActive(_) => Self::new(S::CONFLICT, "SESSION_ACTIVE", message),
            SessionError::AlreadyArchived(..) => Self::new(S::CONFLICT, "ALREADY_ARCHIVED", message),
            SessionError::SessionEmpty(_) => Self::new(S::CONFLICT, "SESSION_EMPTY", message),
            SessionError::EmptyText => Self::new(S::BAD_REQUEST, "EMPTY_TEXT", message),
            SessionError::NoPending => Self::new(S::CONFLICT, "NO_PENDING", message),
            SessionError::IndexOutOfRange { .. } => Self::new(S::BAD_REQUEST, "INDEX_OUT_OF_RANGE", message),
            SessionError::UnknownTag(_) => Self::new(S::BAD_REQUEST, "UNKNOWN_TAG", message),
            SessionError::NoStarters => Self::new(S::CONFLICT, "NO_STARTERS", message),
            SessionError::Generation(g) => g.into(),
            SessionError::Prompt(p) => p.into(),
            SessionError::Store(s) => s.into(),
        }
    }
}
