//! WebSocket transport: one [`Session`] per connection, jobs on the
//! blocking pool, diagnostics behind a trailing debounce.

use std::future::Future;
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use draftforge_core::checker::CheckReport;
use serde_json::Value;
use tokio::net::TcpListener;
use tokio::sync::mpsc;
use tokio::time::Instant;

use crate::engine::Engine;
use crate::session::{Action, JobOutput, Session};

pub const PATH: &str = "/teaspn";
pub const DEFAULT_PORT: u16 = 8765;
pub const DIAGNOSTICS_DEBOUNCE: Duration = Duration::from_millis(500);

enum Internal {
    Job(JobOutput),
    Checked { version: u64, text: Arc<str>, report: CheckReport },
}

pub fn router(engine: Arc<Engine>) -> Router {
    Router::new().route(PATH, get(upgrade)).with_state(engine)
}

async fn upgrade(ws: WebSocketUpgrade, State(engine): State<Arc<Engine>>) -> Response {
    ws.on_upgrade(move |socket| run_session(socket, engine))
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    engine: Arc<Engine>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<()> {
    axum::serve(listener, router(engine)).with_graceful_shutdown(shutdown).await
}

async fn send(socket: &mut WebSocket, v: &Value) -> bool {
    socket.send(Message::Text(v.to_string().into())).await.is_ok()
}

async fn run_session(mut socket: WebSocket, engine: Arc<Engine>) {
    let (tx, mut rx) = mpsc::unbounded_channel::<Internal>();
    let mut session = Session::new();
    let mut debounce: Option<Instant> = None;
    let mut checking = false;
    let mut recheck = false;
    tracing::debug!("session opened");
    loop {
        let timer = async {
            match debounce {
                Some(at) => tokio::time::sleep_until(at).await,
                None => std::future::pending().await,
            }
        };
        tokio::select! {
            incoming = socket.recv() => {
                let text = match incoming {
                    Some(Ok(Message::Text(t))) => t,
                    Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                    Some(Ok(_)) => continue,
                };
                for action in session.handle(text.as_str()) {
                    match action {
                        Action::Send(v) => {
                            if !send(&mut socket, &v).await {
                                return;
                            }
                        }
                        Action::Run(job) => {
                            let (engine, tx) = (engine.clone(), tx.clone());
                            tokio::task::spawn_blocking(move || {
                                let _ = tx.send(Internal::Job(engine.run(*job)));
                            });
                        }
                        Action::ScheduleDiagnostics => debounce = Some(Instant::now() + DIAGNOSTICS_DEBOUNCE),
                        Action::Close => {
                            // Answer jobs already in flight before closing.
                            drop(tx);
                            while let Some(internal) = rx.recv().await {
                                if let Internal::Job(out) = internal {
                                    let v = session.finish(out);
                                    if !send(&mut socket, &v).await {
                                        return;
                                    }
                                }
                            }
                            let _ = socket.send(Message::Close(None)).await;
                            return;
                        }
                    }
                }
            }
            Some(internal) = rx.recv() => match internal {
                Internal::Job(out) => {
                    let v = session.finish(out);
                    if !send(&mut socket, &v).await {
                        return;
                    }
                }
                Internal::Checked { version, text, report } => {
                    checking = false;
                    if let Some(v) = session.publish(version, &text, &report) {
                        if !send(&mut socket, &v).await {
                            return;
                        }
                    }
                    if recheck {
                        recheck = false;
                        debounce = Some(Instant::now());
                    }
                }
            },
            _ = timer => {
                debounce = None;
                if checking {
                    recheck = true;
                } else {
                    checking = true;
                    let (version, text) = session.snapshot();
                    let (engine, tx) = (engine.clone(), tx.clone());
                    tokio::task::spawn_blocking(move || {
                        let report = engine.check(&text);
                        let _ = tx.send(Internal::Checked { version, text, report });
                    });
                }
            }
        }
    }
    tracing::debug!("session closed");
}
