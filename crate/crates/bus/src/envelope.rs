use std::collections::BTreeMap;
use std::fmt;

use bytes::Bytes;
use serde::{Deserialize, Serialize};
use vidbus_core::scheduler::Priority;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExchangePattern {
    RequestResponse,
    OneWay,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Envelope {
    pub message_id: String,
    pub correlation_id: Option<String>,
    pub source_endpoint: String,
    pub exchange_pattern: ExchangePattern,
    pub headers: BTreeMap<String, String>,
    pub body: Bytes,
    pub priority: Priority,
}

impl Envelope {
    pub fn request(message_id: impl Into<String>, address: impl Into<String>, body: impl Into<Bytes>, priority: Priority) -> Self {
        Self {
            message_id: message_id.into(),
            correlation_id: None,
            source_endpoint: address.into(),
            exchange_pattern: ExchangePattern::RequestResponse,
            headers: BTreeMap::new(),
            body: body.into(),
            priority,
        }
    }

    pub fn one_way(mut self) -> Self {
        self.exchange_pattern = ExchangePattern::OneWay;
        self
    }

    pub fn with_header(mut self, key: impl Into<String>, value: impl Into<String>) -> Self {
        self.headers.insert(key.into(), value.into());
        self
    }
}

/// Outcome class of a handled request. Carried on every reply and mapped to
/// an HTTP status code or the `status` field of a TCP reply line.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok,
    BadRequest,
    Unauthorized,
    Forbidden,
    NotFound,
    Conflict,
    Overloaded,
    Timeout,
    Unavailable,
    Internal,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::BadRequest => "bad_request",
            Status::Unauthorized => "unauthorized",
            Status::Forbidden => "forbidden",
            Status::NotFound => "not_found",
            Status::Conflict => "conflict",
            Status::Overloaded => "overloaded",
            Status::Timeout => "timeout",
            Status::Unavailable => "unavailable",
            Status::Internal => "internal",
        }
    }

    pub fn http_code(self) -> u16 {
        match self {
            Status::Ok => 200,
            Status::BadRequest => 400,
            Status::Unauthorized => 401,
            Status::Forbidden => 403,
            Status::NotFound => 404,
            Status::Conflict => 409,
            Status::Overloaded | Status::Unavailable => 503,
            Status::Timeout => 504,
            Status::Internal => 500,
        }
    }

    /// Whether a client may retry the identical request later.
    pub fn retryable(self) -> bool {
        matches!(self, Status::Overloaded | Status::Timeout | Status::Unavailable)
    }
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Handler output: a status and a JSON document.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reply {
    pub status: Status,
    pub body: Bytes,
}

#[derive(Serialize)]
struct ErrorDoc<'a> {
    status: &'static str,
    error: &'a str,
    message: &'a str,
    retryable: bool,
}

impl Reply {
    pub fn ok(body: impl Into<Bytes>) -> Self {
        Self { status: Status::Ok, body: body.into() }
    }

    pub fn json<T: Serialize>(doc: &T) -> Self {
        match serde_json::to_vec(doc) {
            Ok(v) => Self::ok(v),
            Err(e) => Self::error(Status::Internal, &e.to_string()),
        }
    }

    /// `{"status":"error","error":<status>,"message":..,"retryable":..}`
    pub fn error(status: Status, message: &str) -> Self {
        let doc = ErrorDoc { status: "error", error: status.as_str(), message, retryable: status.retryable() };
        Self { status, body: serde_json::to_vec(&doc).expect("error doc serializes").into() }
    }
}
