use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::Router;
use serde_json::value::RawValue;

use crate::address::Address;
use crate::envelope::{Envelope, Reply, Status};
use crate::router::{body_token, Bus, Outcome};
use crate::BusError;

pub const MESSAGE_ID_HEADER: &str = "x-message-id";
pub const CORRELATION_ID_HEADER: &str = "x-correlation-id";

pub fn router(bus: Bus) -> Router {
    Router::new()
        .route("/user_login", post(login))
        .route("/resources/search", post(search))
        .route("/resources/{id}/params", get(get_params))
        .route("/admin/sources", post(add_source))
        .route("/admin/sources/{id}", put(update_source))
        .route("/admin/users", post(add_user))
        .route("/healthz", get(health))
        .route("/metrics", get(metrics))
        .fallback(fallback)
        .with_state(bus)
}

fn bearer(headers: &HeaderMap) -> Option<String> {
    let v = headers.get(header::AUTHORIZATION)?.to_str().ok()?;
    v.strip_prefix("Bearer ").map(|t| t.trim().to_string())
}

fn reply_response(status: Status, body: bytes::Bytes, correlation: Option<&str>) -> Response {
    let code = StatusCode::from_u16(status.http_code()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut resp = (code, [(header::CONTENT_TYPE, "application/json")], body).into_response();
    if status.retryable() {
        resp.headers_mut().insert(header::RETRY_AFTER, HeaderValue::from_static("1"));
    }
    if let Some(c) = correlation.and_then(|c| HeaderValue::from_str(c).ok()) {
        resp.headers_mut().insert(CORRELATION_ID_HEADER, c);
    }
    resp
}

pub(crate) fn bus_error_status(e: &BusError) -> Status {
    match e {
        BusError::NoSuchEndpoint(_) => Status::NotFound,
        BusError::Overloaded => Status::Overloaded,
        BusError::Timeout => Status::Timeout,
        BusError::ShuttingDown => Status::Unavailable,
        BusError::InvalidAddress(_) => Status::BadRequest,
        _ => Status::Internal,
    }
}

async fn call(bus: &Bus, address: Address, headers: &HeaderMap, body: bytes::Bytes, token: Option<String>) -> Response {
    let token = token.or_else(|| bearer(headers)).or_else(|| body_token(&body));
    let message_id = headers
        .get(MESSAGE_ID_HEADER)
        .and_then(|v| v.to_str().ok())
        .map(str::to_string)
        .unwrap_or_else(|| bus.next_message_id("http"));
    let mut env = Envelope::request(message_id.clone(), address.to_string(), body, bus.priority_for(token.as_deref()));
    if let Some(t) = token {
        env = env.with_header("token", t);
    }
    match bus.dispatch(env).await {
        Ok(Outcome::Reply(r)) => reply_response(r.status, r.envelope.body, r.envelope.correlation_id.as_deref()),
        Ok(Outcome::Ack { message_id }) => {
            reply_response(Status::Ok, Reply::json(&serde_json::json!({ "status": "accepted" })).body, Some(&message_id))
        }
        Err(e) => {
            let r = Reply::error(bus_error_status(&e), &e.to_string());
            reply_response(r.status, r.body, Some(&message_id))
        }
    }
}

async fn login(State(bus): State<Bus>, headers: HeaderMap, body: Bytes) -> Response {
    call(&bus, Address::http("/user_login"), &headers, body, None).await
}

async fn search(State(bus): State<Bus>, headers: HeaderMap, body: Bytes) -> Response {
    call(&bus, Address::http("/resources/search"), &headers, body, None).await
}

async fn get_params(State(bus): State<Bus>, Path(id): Path<String>, headers: HeaderMap) -> Response {
    let body = serde_json::to_vec(&serde_json::json!({ "id": id })).expect("id doc");
    call(&bus, Address::http("/resources/{id}/params"), &headers, body.into(), None).await
}

async fn add_source(State(bus): State<Bus>, headers: HeaderMap, body: Bytes) -> Response {
    call(&bus, Address::http("/admin/sources"), &headers, body, None).await
}

async fn update_source(State(bus): State<Bus>, Path(id): Path<String>, headers: HeaderMap, body: Bytes) -> Response {
    let update = match std::str::from_utf8(&body).ok().and_then(|s| RawValue::from_string(s.to_string()).ok()) {
        Some(raw) => raw,
        None => {
            let r = Reply::error(Status::BadRequest, "body is not a JSON document");
            return reply_response(r.status, r.body, None);
        }
    };
    let token = body_token(&body);
    let wrapped = serde_json::to_vec(&serde_json::json!({ "id": id, "update": update })).expect("update doc");
    call(&bus, Address::http("/admin/sources/{id}"), &headers, wrapped.into(), token).await
}

async fn add_user(State(bus): State<Bus>, headers: HeaderMap, body: Bytes) -> Response {
    call(&bus, Address::http("/admin/users"), &headers, body, None).await
}

async fn health(State(bus): State<Bus>, headers: HeaderMap) -> Response {
    call(&bus, Address::http("/healthz"), &headers, bytes::Bytes::from_static(b"{}"), None).await
}

/// Served from the scheduler state directly, so it works under overload.
async fn metrics(State(bus): State<Bus>) -> Response {
    let body = serde_json::to_vec(&bus.metrics()).expect("metrics serialize");
    reply_response(Status::Ok, body.into(), None)
}

/// `POST` to any other path reaches a custom `http://` binding.
async fn fallback(State(bus): State<Bus>, method: Method, uri: Uri, headers: HeaderMap, body: Bytes) -> Response {
    let path = uri.path().to_string();
    let address = match Address::parse(&format!("http://localhost{path}")) {
        Ok(a) if method == Method::POST => a,
        _ => {
            let r = Reply::error(Status::NotFound, &format!("no endpoint at {method} {path}"));
            return reply_response(r.status, r.body, None);
        }
    };
    call(&bus, address, &headers, body, None).await
}
