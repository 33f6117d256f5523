//! Stateless HTTP JSON API over the solver.
//!
//! Every response is an envelope `{status, result | error, api_version}`.
//! Validation errors map to 422, unreachable targets to 409, malformed
//! bodies and CSV to 400, and bodies over [`BODY_LIMIT`] to 413.

use axum::body::Bytes;
use axum::extract::rejection::BytesRejection;
use axum::extract::DefaultBodyLimit;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::Serialize;
use tower_http::trace::TraceLayer;

use clusterhte::api::{Envelope, ErrorBody, ErrorCode, API_VERSION};
use clusterhte::designs;
use clusterhte::solver::{self, SolveRequest, SweepRequest};

pub const BODY_LIMIT: usize = 1 << 20;

pub fn router() -> Router {
    Router::new()
        .route("/healthz", get(healthz))
        .route("/api/v1/solve", post(solve))
        .route("/api/v1/sweep", post(sweep))
        .route("/api/v1/validate", post(validate))
        .route("/api/v1/design/parse", post(parse_design))
        .layer(DefaultBodyLimit::max(BODY_LIMIT))
        .layer(TraceLayer::new_for_http())
}

fn reply<T: Serialize>(result: Result<T, ErrorBody>) -> Response {
    match result {
        Ok(v) => (StatusCode::OK, Json(Envelope::ok(v))).into_response(),
        Err(e) => {
            let status = StatusCode::from_u16(e.code.http_status()).unwrap_or(StatusCode::BAD_REQUEST);
            (status, Json(Envelope::<()>::error(e))).into_response()
        }
    }
}

fn body(raw: Result<Bytes, BytesRejection>) -> Result<Bytes, ErrorBody> {
    raw.map_err(|r| {
        let code = if r.status() == StatusCode::PAYLOAD_TOO_LARGE { ErrorCode::PayloadTooLarge } else { ErrorCode::Parse };
        ErrorBody::new(code, format!("{} (limit {BODY_LIMIT} bytes)", r.body_text()))
    })
}

/// Syntax errors are 400; shape errors are 422 with the field path.
fn decode<T: DeserializeOwned>(bytes: &[u8]) -> Result<T, ErrorBody> {
    let de = &mut serde_json::Deserializer::from_slice(bytes);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        if inner.is_syntax() || inner.is_eof() {
            ErrorBody::new(ErrorCode::Parse, format!("malformed JSON: {inner}"))
        } else {
            ErrorBody::new(ErrorCode::Validation, format!("{path}: {inner}")).field(path)
        }
    })
}

async fn blocking<T: Send + 'static>(f: impl FnOnce() -> Result<T, ErrorBody> + Send + 'static) -> Result<T, ErrorBody> {
    tokio::task::spawn_blocking(f)
        .await
        .unwrap_or_else(|e| Err(ErrorBody::new(ErrorCode::Validation, format!("computation failed: {e}"))))
}

async fn healthz() -> Response {
    Json(serde_json::json!({
        "status": "ok",
        "version": env!("CARGO_PKG_VERSION"),
        "api_version": API_VERSION,
    }))
    .into_response()
}

async fn solve(raw: Result<Bytes, BytesRejection>) -> Response {
    let result = async {
        let req: SolveRequest = decode(&body(raw)?)?;
        blocking(move || solver::solve(&req).map_err(|e| (&e).into())).await
    };
    reply(result.await)
}

async fn sweep(raw: Result<Bytes, BytesRejection>) -> Response {
    let result = async {
        let req: SweepRequest = decode(&body(raw)?)?;
        blocking(move || solver::sweep(&req).map_err(|e| (&e).into())).await
    };
    reply(result.await)
}

#[derive(Serialize)]
struct Validation {
    valid: bool,
    warnings: Vec<String>,
}

async fn validate(raw: Result<Bytes, BytesRejection>) -> Response {
    let result = async {
        let req: SolveRequest = decode(&body(raw)?)?;
        blocking(move || {
            solver::validate_request(&req).map(|warnings| Validation { valid: true, warnings }).map_err(|e| (&e).into())
        })
        .await
    };
    reply(result.await)
}

async fn parse_design(raw: Result<Bytes, BytesRejection>) -> Response {
    let result = body(raw).and_then(|b| {
        let text = std::str::from_utf8(&b).map_err(|e| ErrorBody::new(ErrorCode::Parse, format!("body is not UTF-8: {e}")))?;
        designs::parse_csv(text).map_err(|e| (&e).into())
    });
    reply(result)
}
