//! Wire format: one JSON object per WebSocket text frame.
//!
//! Requests carry `id`, `method` and `params`; notifications omit `id`.
//! Every request gets exactly one response with the same `id`, holding
//! either `result` or `error: {code, message}`. Text offsets on the wire
//! are UTF-16 code units.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
/// A ranged change did not follow the server's document version.
pub const VERSION_MISMATCH: i64 = -32001;
/// The selection spans more than one sentence.
pub const SELECTION_CROSSES_SENTENCES: i64 = -32002;
/// The generation backend failed or timed out.
pub const BACKEND_UNAVAILABLE: i64 = -32003;

pub const DID_CHANGE: &str = "document/didChange";
pub const REVISION: &str = "revision/request";
pub const COMPLETION: &str = "completion/request";
pub const SHUTDOWN: &str = "shutdown";
pub const DIAGNOSTICS: &str = "diagnostics/publish";
pub const RESYNC: &str = "document/resync";

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct Incoming {
    #[serde(default)]
    pub id: Option<Value>,
    pub method: String,
    #[serde(default)]
    pub params: Value,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WireRange {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DidChangeParams {
    pub version: u64,
    /// Absent for a full-text replacement.
    #[serde(default)]
    pub range: Option<WireRange>,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct RevisionParams {
    pub range: WireRange,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct CompletionParams {
    pub position: usize,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default)]
    pub section: Option<String>,
    #[serde(default)]
    pub k: Option<usize>,
}

pub fn response(id: &Value, result: Value) -> Value {
    json!({ "id": id, "result": result })
}

pub fn error(id: &Value, code: i64, message: impl Into<String>) -> Value {
    json!({ "id": id, "error": { "code": code, "message": message.into() } })
}

pub fn error_with_data(id: &Value, code: i64, message: impl Into<String>, data: Value) -> Value {
    json!({ "id": id, "error": { "code": code, "message": message.into(), "data": data } })
}

pub fn notification(method: &str, params: Value) -> Value {
    json!({ "method": method, "params": params })
}
