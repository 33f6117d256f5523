//! Response envelope and error classification shared by the command line
//! and the HTTP service.

use serde::{Deserialize, Serialize};

use crate::designs::ParseError;
use crate::engine::EngineError;
use crate::montecarlo::MonteCarloError;
use crate::solver::SolveError;

pub const API_VERSION: &str = "v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    Validation,
    Infeasible,
    Parse,
    PayloadTooLarge,
}

impl ErrorCode {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorCode::Validation => 2,
            ErrorCode::Infeasible => 3,
            ErrorCode::Parse | ErrorCode::PayloadTooLarge => 4,
        }
    }

    pub fn http_status(self) -> u16 {
        match self {
            ErrorCode::Validation => 422,
            ErrorCode::Infeasible => 409,
            ErrorCode::Parse => 400,
            ErrorCode::PayloadTooLarge => 413,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub field: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub power_at_limit: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub asymptotic_power: Option<f64>,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into(), field: None, power_at_limit: None, asymptotic_power: None }
    }

    pub fn field(mut self, field: impl Into<String>) -> Self {
        self.field = Some(field.into());
        self
    }
}

impl From<&SolveError> for ErrorBody {
    fn from(e: &SolveError) -> Self {
        match e {
            SolveError::Validation { field, message } => {
                ErrorBody::new(ErrorCode::Validation, format!("{field}: {message}")).field(field.clone())
            }
            SolveError::Infeasible { message, power_at_limit, asymptotic_power } => ErrorBody {
                power_at_limit: *power_at_limit,
                asymptotic_power: *asymptotic_power,
                ..ErrorBody::new(ErrorCode::Infeasible, message.clone())
            },
            SolveError::Engine(EngineError::NotIdentifiable { .. }) => {
                ErrorBody::new(ErrorCode::Validation, e.to_string()).field("design")
            }
            SolveError::Engine(_) => ErrorBody::new(ErrorCode::Validation, e.to_string()),
            SolveError::ClosedForm(_) => ErrorBody::new(ErrorCode::Validation, e.to_string()).field("backend"),
        }
    }
}

impl From<&ParseError> for ErrorBody {
    fn from(e: &ParseError) -> Self {
        ErrorBody::new(ErrorCode::Parse, e.to_string()).field("design_csv")
    }
}

impl From<&MonteCarloError> for ErrorBody {
    fn from(e: &MonteCarloError) -> Self {
        match e {
            MonteCarloError::Solve(s) => s.into(),
            _ => ErrorBody::new(ErrorCode::Validation, e.to_string()),
        }
    }
}

/// `{status, result | error, api_version}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub status: Status,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub result: Option<T>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorBody>,
    pub api_version: String,
}

impl<T> Envelope<T> {
    pub fn ok(result: T) -> Self {
        Self { status: Status::Ok, result: Some(result), error: None, api_version: API_VERSION.into() }
    }

    pub fn error(error: ErrorBody) -> Self {
        Self { status: Status::Error, result: None, error: Some(error), api_version: API_VERSION.into() }
    }
}
