use std::sync::Arc;
use std::time::{Duration, Instant};

use draftforge_core::generate::{BuiltinReviser, HttpReviser};
use draftforge_core::lm::NGramLanguageModel;
use draftforge_server::protocol::{
    BACKEND_UNAVAILABLE, METHOD_NOT_FOUND, SELECTION_CROSSES_SENTENCES, VERSION_MISMATCH,
};
use draftforge_server::{serve, Engine, PATH};
use futures_util::{SinkExt, StreamExt};
use serde_json::{json, Value};
use tokio::net::{TcpListener, TcpStream};
use tokio_tungstenite::tungstenite::Message;
use tokio_tungstenite::{connect_async, MaybeTlsStream, WebSocketStream};

type Client = WebSocketStream<MaybeTlsStream<TcpStream>>;

fn lm() -> Arc<NGramLanguageModel> {
    let corpus = [
        "the model works well .",
        "the cat sat on the mat .",
        "we propose a new model .",
        "the model sat on the mat .",
    ];
    Arc::new(NGramLanguageModel::train(&corpus, 3, 0.75).unwrap())
}

async fn start(engine: Engine) -> (Client, tokio::sync::oneshot::Sender<()>) {
    let listener = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    let (stop, stopped) = tokio::sync::oneshot::channel::<()>();
    tokio::spawn(serve(listener, Arc::new(engine), async {
        let _ = stopped.await;
    }));
    let (client, _) = connect_async(format!("ws://{addr}{PATH}")).await.unwrap();
    (client, stop)
}

async fn send(c: &mut Client, v: Value) {
    c.send(Message::Text(v.to_string().into())).await.unwrap();
}

async fn next(c: &mut Client) -> Option<Value> {
    loop {
        match tokio::time::timeout(Duration::from_secs(10), c.next()).await.expect("server went quiet") {
            Some(Ok(Message::Text(t))) => return Some(serde_json::from_str(&t).unwrap()),
            Some(Ok(Message::Close(_))) | None => return None,
            Some(Ok(_)) => continue,
            Some(Err(e)) => panic!("{e}"),
        }
    }
}

/// Reads frames until the response with `id`, collecting notifications.
async fn reply(c: &mut Client, id: i64, seen: &mut Vec<Value>) -> Value {
    loop {
        let v = next(c).await.expect("closed before reply");
        if v["id"] == json!(id) {
            return v;
        }
        seen.push(v);
    }
}

#[tokio::test]
async fn round_trip() {
    let lm = lm();
    let (mut c, stop) = start(Engine::new(lm.clone(), Arc::new(BuiltinReviser::new(lm)))).await;
    let mut seen = Vec::new();
    let doc = "The model works well. The the cat sat on the mat.";

    send(&mut c, json!({"id": 1, "method": "document/didChange", "params": {"version": 1, "text": doc}})).await;
    assert_eq!(reply(&mut c, 1, &mut seen).await["result"]["version"], 1);

    // Diagnostics arrive once edits pause.
    let t0 = Instant::now();
    let diag = loop {
        let v = next(&mut c).await.unwrap();
        if v["method"] == "diagnostics/publish" {
            break v;
        }
    };
    assert!(t0.elapsed() >= Duration::from_millis(300));
    assert_eq!(diag["params"]["version"], 1);
    let ds = diag["params"]["diagnostics"].as_array().unwrap();
    assert!(ds.iter().any(|d| d["range"] == json!({"start": 22, "end": 29})), "{ds:?}");

    send(&mut c, json!({"id": 2, "method": "revision/request", "params": {"range": {"start": 4, "end": 9}}})).await;
    let r = reply(&mut c, 2, &mut seen).await;
    let result = &r["result"];
    assert_eq!(result["version"], 1);
    assert_eq!(result["sentence"], json!({"start": 0, "end": 21}));
    assert!(result["status"] == "ok" || result["status"] == "no_improvement");
    for cand in result["candidates"].as_array().unwrap() {
        assert!(cand["perplexity"].as_f64().unwrap() <= 1.3 * result["input_perplexity"].as_f64().unwrap() + 1e-9);
    }

    send(&mut c, json!({"id": 3, "method": "revision/request", "params": {"range": {"start": 10, "end": 30}}})).await;
    assert_eq!(reply(&mut c, 3, &mut seen).await["error"]["code"], SELECTION_CROSSES_SENTENCES);

    send(&mut c, json!({"id": 4, "method": "completion/request", "params": {"position": 26, "title": "A study", "section": "Introduction"}})).await;
    let comp = reply(&mut c, 4, &mut seen).await;
    assert!(!comp["result"]["continuations"].as_array().unwrap().is_empty());

    send(&mut c, json!({"id": 5, "method": "document/didChange", "params": {"version": 7, "range": {"start": 0, "end": 0}, "text": "x"}})).await;
    let e = reply(&mut c, 5, &mut seen).await;
    assert_eq!(e["error"]["code"], VERSION_MISMATCH);
    assert_eq!(e["error"]["data"]["version"], 1);

    send(&mut c, json!({"id": 6, "method": "no/such", "params": {}})).await;
    assert_eq!(reply(&mut c, 6, &mut seen).await["error"]["code"], METHOD_NOT_FOUND);

    send(&mut c, json!({"id": 7, "method": "shutdown"})).await;
    reply(&mut c, 7, &mut seen).await;
    while next(&mut c).await.is_some() {}
    let _ = stop.send(());
}

#[tokio::test]
async fn dead_backend_reports_unavailable() {
    let dead = TcpListener::bind("127.0.0.1:0").await.unwrap().local_addr().unwrap();
    let reviser = HttpReviser::new(format!("http://{dead}/generate"), 4, Duration::from_secs(1));
    let (mut c, stop) = start(Engine::new(lm(), Arc::new(reviser))).await;
    let mut seen = Vec::new();
    send(
        &mut c,
        json!({"id": 1, "method": "document/didChange", "params": {"version": 1, "text": "The model works well."}}),
    )
    .await;
    reply(&mut c, 1, &mut seen).await;
    send(&mut c, json!({"id": 2, "method": "revision/request", "params": {"range": {"start": 0, "end": 9}}})).await;
    let e = reply(&mut c, 2, &mut seen).await;
    assert_eq!(e["error"]["code"], BACKEND_UNAVAILABLE, "{e}");
    let _ = stop.send(());
}
