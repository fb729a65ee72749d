use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Failures of a session operation, shared by the HTTP API and the CLI.
#[derive(Debug, Error)]
pub enum ServiceError {
    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    /// A required earlier step (upload, search, commit) has not happened.
    #[error("{0}")]
    Precondition(String),

    #[error("{0}")]
    BadRequest(String),

    #[error("invalid JSON: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Engine(#[from] subscope_core::Error),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type ServiceResult<T> = Result<T, ServiceError>;

/// Machine-readable error document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: ErrorDetail,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ErrorDetail {
    pub code: String,
    pub message: String,
}

impl ServiceError {
    pub fn code(&self) -> &'static str {
        use subscope_core::Error as E;
        match self {
            ServiceError::NotFound(_) => "not_found",
            ServiceError::Conflict(_) => "conflict",
            ServiceError::Precondition(_) => "missing_prerequisite",
            ServiceError::BadRequest(_) => "bad_request",
            ServiceError::Json(e) if e.is_syntax() || e.is_eof() => "malformed_json",
            ServiceError::Json(_) => "invalid_body",
            ServiceError::Io(_) | ServiceError::Engine(E::Io(_)) => "io",
            ServiceError::Engine(E::Schema(_) | E::SchemaMismatch(_) | E::UnknownCategory { .. } | E::Csv(_)) => {
                "schema"
            }
            ServiceError::Engine(_) => "invalid_input",
        }
    }

    pub fn status(&self) -> u16 {
        match self.code() {
            "not_found" => 404,
            "conflict" | "missing_prerequisite" => 409,
            "bad_request" | "malformed_json" => 400,
            "io" => 500,
            _ => 422,
        }
    }

    pub fn body(&self) -> ErrorBody {
        ErrorBody {
            error: ErrorDetail {
                code: self.code().to_string(),
                message: self.to_string(),
            },
        }
    }
}
