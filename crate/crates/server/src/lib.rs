//! Editing-assistance protocol server: revision, completion and
//! diagnostics over a WebSocket.

pub mod engine;
pub mod protocol;
pub mod session;
pub mod ws;

pub use engine::{CompletionSettings, Engine};
pub use session::{Action, Job, JobOutput, Session};
pub use ws::{router, serve, DEFAULT_PORT, PATH};
