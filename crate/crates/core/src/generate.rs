//! Sources of revision candidates: the built-in edit backend driven through
//! diverse beam search, or an external generator reached over HTTP or a
//! child-process pipe.
//!
//! The external wire format is one JSON object per request and response:
//!
//! ```text
//! -> {"source_text": "a <? b ?> c", "marks": {"span": [2, 2], "placeholders": []}, "k": 15}
//! <- {"candidates": [{"text": "a x c", "logprob": -1.5}]}
//! ```
//!
//! Over a pipe each object occupies exactly one line.

use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beam::{BeamConfig, BeamError};
use crate::lm::NGramLanguageModel;
use crate::propose::{propose_with, EditParams};
use crate::text::MarkedText;

pub const DEFAULT_EXTERNAL_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedCandidate {
    pub text: String,
    pub logprob: f64,
}

#[derive(Debug, Error)]
pub enum GenerationError {
    #[error(transparent)]
    Beam(#[from] BeamError),
    #[error("generation backend unavailable: {0}")]
    Unavailable(String),
    #[error("generation backend timed out after {0:?}")]
    Timeout(Duration),
    #[error("malformed backend response: {0}")]
    Protocol(String),
}

/// Anything that can turn a (possibly marked) sentence into candidates,
/// best first.
pub trait Reviser: Send + Sync {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError>;
}

impl<R: Reviser + ?Sized> Reviser for Arc<R> {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        (**self).generate(source)
    }
}

/// Returns the clean source sentence as its only candidate.
pub struct CopyReviser;

impl Reviser for CopyReviser {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        Ok(vec![GeneratedCandidate { text: source.sentence.raw.clone(), logprob: 0.0 }])
    }
}

pub struct BuiltinReviser {
    lm: Arc<NGramLanguageModel>,
    pub params: EditParams,
    pub beam: BeamConfig,
}

impl BuiltinReviser {
    pub fn new(lm: Arc<NGramLanguageModel>) -> Self {
        Self { lm, params: EditParams::default(), beam: BeamConfig::default() }
    }

    pub fn with_beam(mut self, beam: BeamConfig) -> Self {
        self.beam = beam;
        self
    }
}

impl Reviser for BuiltinReviser {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        Ok(propose_with(&self.lm, self.params, source, &self.beam)?
            .into_iter()
            .map(|p| GeneratedCandidate { text: p.text, logprob: p.logprob })
            .collect())
    }
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExternalMarks {
    pub span: Option<[usize; 2]>,
    pub placeholders: Vec<usize>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExternalRequest {
    pub source_text: String,
    pub marks: ExternalMarks,
    pub k: usize,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ExternalResponse {
    pub candidates: Vec<GeneratedCandidate>,
}

impl ExternalRequest {
    pub fn new(source: &MarkedText, k: usize) -> Self {
        Self {
            source_text: source.render(),
            marks: ExternalMarks {
                span: source.edit_span.map(|s| [s.start_token, s.end_token]),
                placeholders: source.placeholders.clone(),
            },
            k,
        }
    }
}

fn check_response(resp: ExternalResponse) -> Result<Vec<GeneratedCandidate>, GenerationError> {
    if let Some(bad) = resp.candidates.iter().find(|c| !c.logprob.is_finite()) {
        return Err(GenerationError::Protocol(format!("non-finite logprob for {:?}", bad.text)));
    }
    Ok(resp.candidates)
}

/// External generator behind an HTTP endpoint accepting a JSON POST.
pub struct HttpReviser {
    url: String,
    k: usize,
    timeout: Duration,
    agent: ureq::Agent,
}

impl HttpReviser {
    pub fn new(url: impl Into<String>, k: usize, timeout: Duration) -> Self {
        let agent =
            ureq::Agent::config_builder().timeout_global(Some(timeout)).http_status_as_error(true).build().into();
        Self { url: url.into(), k, timeout, agent }
    }
}

impl Reviser for HttpReviser {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        let body = serde_json::to_string(&ExternalRequest::new(source, self.k))
            .map_err(|e| GenerationError::Protocol(e.to_string()))?;
        let mut resp =
            self.agent.post(&self.url).header("Content-Type", "application/json").send(body).map_err(|e| match e {
                ureq::Error::Timeout(_) => GenerationError::Timeout(self.timeout),
                other => GenerationError::Unavailable(other.to_string()),
            })?;
        let text = resp.body_mut().read_to_string().map_err(|e| GenerationError::Protocol(e.to_string()))?;
        let parsed: ExternalResponse =
            serde_json::from_str(&text).map_err(|e| GenerationError::Protocol(e.to_string()))?;
        check_response(parsed)
    }
}

struct PipeChannel {
    child: Child,
    stdin: ChildStdin,
    lines: mpsc::Receiver<std::io::Result<String>>,
}

/// External generator running as a child process that reads one request
/// line on stdin and answers with one response line on stdout. The process
/// is started on first use and restarted after a failure.
pub struct PipeReviser {
    program: String,
    args: Vec<String>,
    k: usize,
    timeout: Duration,
    channel: Mutex<Option<PipeChannel>>,
}

impl PipeReviser {
    pub fn new(program: impl Into<String>, args: Vec<String>, k: usize, timeout: Duration) -> Self {
        Self { program: program.into(), args, k, timeout, channel: Mutex::new(None) }
    }

    fn spawn(&self) -> Result<PipeChannel, GenerationError> {
        let mut child = Command::new(&self.program)
            .args(&self.args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| GenerationError::Unavailable(format!("{}: {e}", self.program)))?;
        let stdin = child.stdin.take().expect("piped stdin");
        let stdout = child.stdout.take().expect("piped stdout");
        let (tx, rx) = mpsc::channel();
        std::thread::spawn(move || {
            for line in BufReader::new(stdout).lines() {
                if tx.send(line).is_err() {
                    break;
                }
            }
        });
        Ok(PipeChannel { child, stdin, lines: rx })
    }
}

impl Drop for PipeReviser {
    fn drop(&mut self) {
        if let Ok(mut guard) = self.channel.lock() {
            if let Some(mut ch) = guard.take() {
                let _ = ch.child.kill();
                let _ = ch.child.wait();
            }
        }
    }
}

impl Reviser for PipeReviser {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        let line = serde_json::to_string(&ExternalRequest::new(source, self.k))
            .map_err(|e| GenerationError::Protocol(e.to_string()))?;
        let mut guard = self.channel.lock().unwrap_or_else(|p| p.into_inner());
        if guard.is_none() {
            *guard = Some(self.spawn()?);
        }
        let ch = guard.as_mut().expect("channel present");
        let result = (|| {
            writeln!(ch.stdin, "{line}")
                .and_then(|_| ch.stdin.flush())
                .map_err(|e| GenerationError::Unavailable(e.to_string()))?;
            match ch.lines.recv_timeout(self.timeout) {
                Ok(Ok(reply)) => {
                    let parsed: ExternalResponse =
                        serde_json::from_str(&reply).map_err(|e| GenerationError::Protocol(e.to_string()))?;
                    check_response(parsed)
                }
                Ok(Err(e)) => Err(GenerationError::Unavailable(e.to_string())),
                Err(mpsc::RecvTimeoutError::Timeout) => Err(GenerationError::Timeout(self.timeout)),
                Err(mpsc::RecvTimeoutError::Disconnected) => {
                    Err(GenerationError::Unavailable("backend process exited".into()))
                }
            }
        })();
        if result.is_err() {
            if let Some(mut dead) = guard.take() {
                let _ = dead.child.kill();
                let _ = dead.child.wait();
            }
        }
        result
    }
}
