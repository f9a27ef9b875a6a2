//! Wire types for the line-delimited JSON protocol.
//!
//! Every request is one JSON object on one line with an integer `id` and an
//! `op`. Every response echoes the id and carries either `payload` or
//! `error: {code, message}`. Object keys are emitted in sorted order.

use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

pub const PROTOCOL_VERSION: &str = "1.0";
pub const DEFAULT_MAX_SESSIONS: usize = 1024;
pub const OPS: [&str; 4] = ["spec", "reset", "step", "close"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorCode {
    BadConfig,
    UnknownSession,
    SessionTerminated,
    Busy,
    BadRequest,
}

impl ErrorCode {
    pub const ALL: [ErrorCode; 5] = [
        ErrorCode::BadConfig,
        ErrorCode::UnknownSession,
        ErrorCode::SessionTerminated,
        ErrorCode::Busy,
        ErrorCode::BadRequest,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ErrorCode::BadConfig => "BadConfig",
            ErrorCode::UnknownSession => "UnknownSession",
            ErrorCode::SessionTerminated => "SessionTerminated",
            ErrorCode::Busy => "Busy",
            ErrorCode::BadRequest => "BadRequest",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("{code}: {message}")]
pub struct ProtocolError {
    pub code: ErrorCode,
    pub message: String,
}

impl ProtocolError {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }
}

/// Rounds to six significant digits. Non-finite values become 0.
pub fn sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return 0.0;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Applies [`sig6`] to every non-integer number in `v`.
pub fn round_floats(v: &mut Value) {
    match v {
        Value::Number(n) if n.is_f64() => {
            let r = sig6(n.as_f64().expect("f64 number"));
            *v = json!(r);
        }
        Value::Array(items) => items.iter_mut().for_each(round_floats),
        Value::Object(map) => map.values_mut().for_each(round_floats),
        _ => {}
    }
}

pub fn ok_response(id: &Value, mut payload: Value) -> Value {
    round_floats(&mut payload);
    json!({ "id": id, "ok": true, "payload": payload })
}

pub fn error_response(id: &Value, err: &ProtocolError) -> Value {
    json!({ "id": id, "ok": false, "error": { "code": err.code.as_str(), "message": err.message } })
}

/// One response line, without the trailing newline.
pub fn encode(v: &Value) -> String {
    serde_json::to_string(v).expect("json values serialize")
}

/// A request split into its envelope and its op-specific fields.
#[derive(Debug, Clone, PartialEq)]
pub struct Request {
    pub id: Value,
    pub op: String,
    pub args: Map<String, Value>,
}

/// Parses one line. On failure returns the id to echo (null when it could
/// not be recovered) with the error.
pub fn parse_request(line: &str) -> Result<Request, (Value, ProtocolError)> {
    let value: Value = serde_json::from_str(line)
        .map_err(|e| (Value::Null, ProtocolError::new(ErrorCode::BadRequest, format!("malformed JSON: {e}"))))?;
    let Value::Object(mut map) = value else {
        return Err((Value::Null, ProtocolError::new(ErrorCode::BadRequest, "request must be a JSON object")));
    };
    let id = match map.remove("id") {
        Some(Value::Number(n)) if n.is_i64() || n.is_u64() => Value::Number(n),
        _ => return Err((Value::Null, ProtocolError::new(ErrorCode::BadRequest, "request needs an integer id"))),
    };
    let op = match map.remove("op") {
        Some(Value::String(op)) => op,
        _ => return Err((id, ProtocolError::new(ErrorCode::BadRequest, "request needs a string op"))),
    };
    Ok(Request { id, op, args: map })
}

/// Builds a request line for the given op and fields.
pub fn request_line(id: u64, op: &str, args: Value) -> String {
    let mut map = match args {
        Value::Object(map) => map,
        Value::Null => Map::new(),
        other => panic!("request args must be an object, got {other}"),
    };
    map.insert("id".into(), json!(id));
    map.insert("op".into(), json!(op));
    encode(&Value::Object(map))
}
