//! Per-connection protocol state, independent of any transport.
//!
//! `Session::handle` consumes one inbound frame and returns the actions the
//! transport must take. Expensive work comes back as a [`Job`] holding a
//! snapshot of the document taken when the request arrived; the transport
//! runs it (see [`crate::Engine`]) and hands the output to
//! [`Session::finish`], which produces the response.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use draftforge_core::checker::CheckReport;
use draftforge_core::completion::{CompletionContext, Continuation};
use draftforge_core::revision::{paragraph_range, RevisionError, RevisionOutcome, RevisionRequest};
use draftforge_core::text::{byte_to_utf16, utf16_to_byte};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

use crate::protocol::{self, *};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ChangeError {
    #[error("expected version {expected}, got {got}; resend the full document text")]
    VersionMismatch { expected: u64, got: u64 },
    #[error("range {start}..{end} is outside the document or splits a character")]
    BadRange { start: usize, end: usize },
}

#[derive(Debug, Clone)]
pub struct RevisionMeta {
    pub id: Value,
    pub version: u64,
    pub sentence: WireRange,
    key: usize,
    ticket: u64,
}

#[derive(Debug, Clone)]
pub struct CompletionMeta {
    pub id: Value,
    pub version: u64,
}

#[derive(Debug, Clone)]
pub enum Job {
    Revision { meta: RevisionMeta, request: RevisionRequest },
    Completion { meta: CompletionMeta, context: CompletionContext, k: Option<usize>, seed: u64 },
}

impl Job {
    pub fn id(&self) -> &Value {
        match self {
            Job::Revision { meta, .. } => &meta.id,
            Job::Completion { meta, .. } => &meta.id,
        }
    }
}

#[derive(Debug)]
pub enum JobOutput {
    Revision { meta: RevisionMeta, result: Result<RevisionOutcome, String> },
    Completion { meta: CompletionMeta, continuations: Vec<Continuation> },
}

#[derive(Debug)]
pub enum Action {
    Send(Value),
    Run(Box<Job>),
    /// The document changed; (re)start the diagnostics debounce.
    ScheduleDiagnostics,
    Close,
}

#[derive(Debug, Default)]
pub struct Session {
    text: String,
    version: u64,
    next_ticket: u64,
    /// Latest revision ticket per sentence start offset.
    latest: HashMap<usize, u64>,
    closed: bool,
}

fn params<T: DeserializeOwned>(v: &Value) -> Result<T, String> {
    serde_json::from_value(v.clone()).map_err(|e| format!("invalid params: {e}"))
}

impl Session {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn is_closed(&self) -> bool {
        self.closed
    }

    /// Document snapshot for a diagnostics run.
    pub fn snapshot(&self) -> (u64, Arc<str>) {
        (self.version, Arc::from(self.text.as_str()))
    }

    fn wire_to_bytes(&self, r: WireRange) -> Result<Range<usize>, ChangeError> {
        let bad = ChangeError::BadRange { start: r.start, end: r.end };
        if r.start > r.end {
            return Err(bad);
        }
        let s = utf16_to_byte(&self.text, r.start).ok_or(bad.clone())?;
        let e = utf16_to_byte(&self.text, r.end).ok_or(bad)?;
        Ok(s..e)
    }

    fn bytes_to_wire(text: &str, r: &Range<usize>) -> WireRange {
        WireRange { start: byte_to_utf16(text, r.start), end: byte_to_utf16(text, r.end) }
    }

    /// Applies one versioned change. The version must be exactly one past
    /// the current one; a missing range replaces the whole document.
    pub fn apply_change(&mut self, change: &DidChangeParams) -> Result<u64, ChangeError> {
        if change.version != self.version + 1 {
            return Err(ChangeError::VersionMismatch { expected: self.version + 1, got: change.version });
        }
        match change.range {
            None => self.text = change.text.clone(),
            Some(r) => {
                let range = self.wire_to_bytes(r)?;
                self.text.replace_range(range, &change.text);
            }
        }
        self.version = change.version;
        Ok(self.version)
    }

    pub fn handle(&mut self, frame: &str) -> Vec<Action> {
        if self.closed {
            return Vec::new();
        }
        let value: Value = match serde_json::from_str(frame) {
            Ok(v) => v,
            Err(e) => {
                return vec![Action::Send(protocol::error(&Value::Null, PARSE_ERROR, format!("parse error: {e}")))]
            }
        };
        let id_hint = value.get("id").cloned().unwrap_or(Value::Null);
        let msg: Incoming = match serde_json::from_value(value) {
            Ok(m) => m,
            Err(e) => {
                return vec![Action::Send(protocol::error(&id_hint, INVALID_REQUEST, format!("invalid request: {e}")))]
            }
        };
        if let Some(id) = &msg.id {
            if !(id.is_number() || id.is_string()) {
                return vec![Action::Send(protocol::error(
                    &Value::Null,
                    INVALID_REQUEST,
                    "id must be a number or string",
                ))];
            }
        }
        match msg.method.as_str() {
            DID_CHANGE => self.did_change(&msg),
            REVISION => self.revision(&msg),
            COMPLETION => self.completion(&msg),
            SHUTDOWN => {
                self.closed = true;
                let mut out = Vec::new();
                if let Some(id) = &msg.id {
                    out.push(Action::Send(protocol::response(id, Value::Null)));
                }
                out.push(Action::Close);
                out
            }
            other => match &msg.id {
                Some(id) => {
                    vec![Action::Send(protocol::error(id, METHOD_NOT_FOUND, format!("method not found: {other}")))]
                }
                None => Vec::new(),
            },
        }
    }

    fn did_change(&mut self, msg: &Incoming) -> Vec<Action> {
        let change: DidChangeParams = match params(&msg.params) {
            Ok(c) => c,
            Err(e) => return self.fail(msg, INVALID_PARAMS, e, Value::Null),
        };
        match self.apply_change(&change) {
            Ok(v) => {
                let mut out = vec![Action::ScheduleDiagnostics];
                if let Some(id) = &msg.id {
                    out.insert(0, Action::Send(protocol::response(id, json!({ "version": v }))));
                }
                out
            }
            Err(e @ ChangeError::VersionMismatch { .. }) => {
                let data = json!({ "version": self.version, "resync": true });
                self.fail(msg, VERSION_MISMATCH, e.to_string(), data)
            }
            Err(e) => self.fail(msg, INVALID_PARAMS, e.to_string(), Value::Null),
        }
    }

    /// Error response for requests; for notifications, a resync hint
    /// carrying the same information.
    fn fail(&self, msg: &Incoming, code: i64, message: String, data: Value) -> Vec<Action> {
        let v = match &msg.id {
            Some(id) if data.is_null() => protocol::error(id, code, message),
            Some(id) => protocol::error_with_data(id, code, message, data),
            None if msg.method == DID_CHANGE => {
                protocol::notification(RESYNC, json!({ "version": self.version, "code": code, "message": message }))
            }
            None => return Vec::new(),
        };
        vec![Action::Send(v)]
    }

    fn revision(&mut self, msg: &Incoming) -> Vec<Action> {
        let Some(id) = msg.id.clone() else { return Vec::new() };
        let p: RevisionParams = match params(&msg.params) {
            Ok(p) => p,
            Err(e) => return vec![Action::Send(protocol::error(&id, INVALID_PARAMS, e))],
        };
        let range = match self.wire_to_bytes(p.range) {
            Ok(r) => r,
            Err(e) => return vec![Action::Send(protocol::error(&id, INVALID_PARAMS, e.to_string()))],
        };
        let request = match RevisionRequest::from_selection(&self.text, range, crate::engine::CONTEXT_TOKENS) {
            Ok(r) => r,
            Err(e @ RevisionError::CrossesSentences) => {
                return vec![Action::Send(protocol::error(&id, SELECTION_CROSSES_SENTENCES, e.to_string()))]
            }
            Err(e) => return vec![Action::Send(protocol::error(&id, INVALID_PARAMS, e.to_string()))],
        };
        self.next_ticket += 1;
        let key = request.sentence_range.start;
        self.latest.insert(key, self.next_ticket);
        let meta = RevisionMeta {
            id,
            version: self.version,
            sentence: Self::bytes_to_wire(&self.text, &request.sentence_range),
            key,
            ticket: self.next_ticket,
        };
        vec![Action::Run(Box::new(Job::Revision { meta, request }))]
    }

    fn completion(&mut self, msg: &Incoming) -> Vec<Action> {
        let Some(id) = msg.id.clone() else { return Vec::new() };
        let p: CompletionParams = match params(&msg.params) {
            Ok(p) => p,
            Err(e) => return vec![Action::Send(protocol::error(&id, INVALID_PARAMS, e))],
        };
        if p.k == Some(0) {
            return vec![Action::Send(protocol::error(&id, INVALID_PARAMS, "k must be at least 1"))];
        }
        let Some(pos) = utf16_to_byte(&self.text, p.position) else {
            return vec![Action::Send(protocol::error(
                &id,
                INVALID_PARAMS,
                format!("position {} is outside the document", p.position),
            ))];
        };
        let para = paragraph_range(&self.text, pos);
        let start = para.start.min(pos);
        let context =
            CompletionContext { title: p.title, section: p.section, left_text: self.text[start..pos].to_string() };
        let meta = CompletionMeta { id, version: self.version };
        let seed = self.version.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ pos as u64;
        vec![Action::Run(Box::new(Job::Completion { meta, context, k: p.k, seed }))]
    }

    /// Response for a finished job.
    pub fn finish(&mut self, output: JobOutput) -> Value {
        match output {
            JobOutput::Revision { meta, result } => {
                let superseded = self.latest.get(&meta.key) != Some(&meta.ticket);
                if !superseded {
                    self.latest.remove(&meta.key);
                }
                match result {
                    Ok(outcome) => protocol::response(
                        &meta.id,
                        json!({
                            "version": meta.version,
                            "sentence": meta.sentence,
                            "status": outcome.status,
                            "input_perplexity": outcome.input_perplexity,
                            "candidates": outcome.candidates,
                            "superseded": superseded,
                        }),
                    ),
                    Err(e) => {
                        protocol::error_with_data(&meta.id, BACKEND_UNAVAILABLE, e, json!({ "superseded": superseded }))
                    }
                }
            }
            JobOutput::Completion { meta, continuations } => protocol::response(
                &meta.id,
                json!({
                    "version": meta.version,
                    "continuations": continuations
                        .iter()
                        .map(|c| json!({ "text": c.text, "perplexity": c.perplexity }))
                        .collect::<Vec<_>>(),
                }),
            ),
        }
    }

    /// Diagnostics notification, or `None` if the document moved on since
    /// `version`.
    pub fn publish(&self, version: u64, text: &str, report: &CheckReport) -> Option<Value> {
        if version != self.version {
            return None;
        }
        let diagnostics: Vec<Value> = report
            .diagnostics
            .iter()
            .map(|d| {
                json!({
                    "range": Self::bytes_to_wire(text, &d.range),
                    "message": d.message,
                    "replacements": d.replacements,
                    "source": d.source,
                })
            })
            .collect();
        Some(protocol::notification(
            DIAGNOSTICS,
            json!({ "version": version, "degraded": report.degraded, "diagnostics": diagnostics }),
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn change(s: &mut Session, version: u64, range: Option<(usize, usize)>, text: &str) -> Result<u64, ChangeError> {
        s.apply_change(&DidChangeParams {
            version,
            range: range.map(|(start, end)| WireRange { start, end }),
            text: text.into(),
        })
    }

    fn sent(actions: &[Action]) -> Vec<&Value> {
        actions.iter().filter_map(|a| if let Action::Send(v) = a { Some(v) } else { None }).collect()
    }

    #[test]
    fn apply_change_cases() {
        let mut s = Session::new();
        change(&mut s, 1, None, "hello").unwrap();
        change(&mut s, 2, Some((5, 5)), " world").unwrap();
        assert_eq!(s.text(), "hello world");
        assert_eq!(change(&mut s, 4, Some((0, 0)), "x"), Err(ChangeError::VersionMismatch { expected: 3, got: 4 }));
        assert_eq!(s.text(), "hello world");
        change(&mut s, 3, Some((0, 11)), "new").unwrap();
        assert_eq!((s.text(), s.version()), ("new", 3));
        assert!(matches!(change(&mut s, 4, Some((2, 9)), "x"), Err(ChangeError::BadRange { .. })));
    }

    #[test]
    fn utf16_ranges() {
        let mut s = Session::new();
        change(&mut s, 1, None, "a\u{1F600}b").unwrap();
        change(&mut s, 2, Some((3, 4)), "c").unwrap();
        assert_eq!(s.text(), "a\u{1F600}c");
        assert!(change(&mut s, 3, Some((2, 3)), "x").is_err());
    }

    #[test]
    fn protocol_errors_keep_session_alive() {
        let mut s = Session::new();
        let out = s.handle("{not json");
        assert_eq!(sent(&out)[0]["error"]["code"], PARSE_ERROR);
        let out = s.handle(r#"{"id": 1, "method": "nope"}"#);
        assert_eq!(sent(&out)[0]["error"]["code"], METHOD_NOT_FOUND);
        assert_eq!(sent(&out)[0]["id"], 1);
        let out = s.handle(r#"{"id": 2, "method": "revision/request", "params": {"range": 3}}"#);
        assert_eq!(sent(&out)[0]["error"]["code"], INVALID_PARAMS);
        let out = s.handle(r#"{"id": 3, "method": "document/didChange", "params": {"version": 1, "text": "A b."}}"#);
        assert_eq!(sent(&out)[0]["result"]["version"], 1);
        assert!(!s.is_closed());
    }

    #[test]
    fn crossing_selection_is_an_error_response() {
        let mut s = Session::new();
        change(&mut s, 1, None, "One two. Three four.").unwrap();
        let out = s.handle(r#"{"id": 7, "method": "revision/request", "params": {"range": {"start": 4, "end": 12}}}"#);
        let v = sent(&out)[0];
        assert_eq!(v["error"]["code"], SELECTION_CROSSES_SENTENCES);
        assert_eq!(v["error"]["message"], "selection must not cross sentences");
    }

    #[test]
    fn stale_notification_change_requests_resync() {
        let mut s = Session::new();
        let out = s.handle(r#"{"method": "document/didChange", "params": {"version": 5, "text": "x"}}"#);
        let v = sent(&out)[0];
        assert_eq!(v["method"], RESYNC);
        assert_eq!(v["params"]["version"], 0);
    }

    #[test]
    fn later_request_for_same_sentence_supersedes() {
        let mut s = Session::new();
        change(&mut s, 1, None, "The cat sat. A dog ran.").unwrap();
        let job = |s: &mut Session, id: u64, start: usize, end: usize| {
            let frame = json!({"id": id, "method": REVISION, "params": {"range": {"start": start, "end": end}}});
            match s.handle(&frame.to_string()).pop() {
                Some(Action::Run(job)) => match *job {
                    Job::Revision { meta, .. } => meta,
                    other => panic!("{other:?}"),
                },
                other => panic!("{other:?}"),
            }
        };
        let first = job(&mut s, 1, 4, 7);
        let second = job(&mut s, 2, 0, 3);
        let other = job(&mut s, 3, 15, 18);
        let ok = || {
            Ok(RevisionOutcome {
                status: draftforge_core::revision::RevisionStatus::NoImprovement,
                input_perplexity: 1.0,
                candidates: vec![],
            })
        };
        let r2 = s.finish(JobOutput::Revision { meta: second, result: ok() });
        let r1 = s.finish(JobOutput::Revision { meta: first, result: ok() });
        let r3 = s.finish(JobOutput::Revision { meta: other, result: ok() });
        assert_eq!(r1["result"]["superseded"], true);
        assert_eq!(r2["result"]["superseded"], false);
        assert_eq!(r3["result"]["superseded"], false);
        assert_eq!(r1["id"], 1);
    }

    #[test]
    fn shutdown_responds_then_closes() {
        let mut s = Session::new();
        let out = s.handle(r#"{"id": 9, "method": "shutdown"}"#);
        assert_eq!(sent(&out)[0]["id"], 9);
        assert!(matches!(out.last(), Some(Action::Close)));
        assert!(s.handle(r#"{"id": 10, "method": "nope"}"#).is_empty());
    }
}
