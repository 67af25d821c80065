//! Randomized protocol driver: interleaves edits, requests and malformed
//! frames against one session, finishing jobs in random order, and checks
//! the request/response bijection and document convergence.

use std::collections::HashMap;
use std::sync::Arc;

use draftforge_core::diff::{apply_diff, DiffRun};
use draftforge_core::generate::{GeneratedCandidate, GenerationError, Reviser};
use draftforge_core::lm::NGramLanguageModel;
use draftforge_core::text::{byte_to_utf16, utf16_to_byte, MarkedText};
use draftforge_server::{Action, Engine, Job, Session};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

/// Cheap reviser: a few deterministic rewrites of the clean sentence.
pub struct Shuffler;

impl Reviser for Shuffler {
    fn generate(&self, source: &MarkedText) -> Result<Vec<GeneratedCandidate>, GenerationError> {
        let words = source.sentence.owned_words();
        let mut rev = words.clone();
        rev.reverse();
        let mut out = vec![
            GeneratedCandidate { text: rev.join(" "), logprob: -1.0 },
            GeneratedCandidate { text: words.join(" "), logprob: -0.5 },
        ];
        if words.len() > 1 {
            out.push(GeneratedCandidate { text: words[1..].join(" "), logprob: -2.0 });
        }
        Ok(out)
    }
}

pub fn fuzz_engine() -> Engine {
    let lm = NGramLanguageModel::train(&["the model works .", "a cat sat .", "the cat works ."], 3, 0.75).unwrap();
    Engine::new(Arc::new(lm), Arc::new(Shuffler))
}

#[derive(Debug, Default)]
pub struct FuzzStats {
    pub messages: usize,
    pub requests: usize,
    pub responses: usize,
    pub applied_changes: usize,
    pub violations: Vec<String>,
}

const PIECES: &[&str] = &[
    "The model works",
    " well",
    ". ",
    "A cat sat.",
    " the",
    "\u{e9}t\u{e9}",
    "\u{1F600}",
    "\n\n",
    "x",
    "",
    " and then. It ran",
    "Fig. 2 shows",
];

/// UTF-16 offsets of every char boundary of `text`.
fn boundaries(text: &str) -> Vec<usize> {
    let mut out: Vec<usize> = text.char_indices().map(|(b, _)| byte_to_utf16(text, b)).collect();
    out.push(byte_to_utf16(text, text.len()));
    out
}

fn random_range(rng: &mut ChaCha8Rng, text: &str) -> (usize, usize) {
    let b = boundaries(text);
    let i = rng.random_range(0..b.len());
    let j = rng.random_range(i..b.len().min(i + 12));
    (b[i], b[j])
}

struct Pending {
    job: Job,
}

pub fn run_protocol_fuzz(seed: u64, messages: usize) -> FuzzStats {
    let engine = fuzz_engine();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut session = Session::new();
    let mut stats = FuzzStats::default();
    let mut client_text = String::new();
    let mut client_version = 0u64;
    let mut next_id = 0i64;
    // id -> (client version, client text) when sent
    let mut outstanding: HashMap<i64, (u64, String)> = HashMap::new();
    let mut answered: HashMap<i64, usize> = HashMap::new();
    let mut pending: Vec<Pending> = Vec::new();

    let record = |v: &Value,
                  stats: &mut FuzzStats,
                  answered: &mut HashMap<i64, usize>,
                  outstanding: &HashMap<i64, (u64, String)>| {
        let Some(id) = v.get("id") else { return };
        if id.is_null() {
            return;
        }
        stats.responses += 1;
        let id = id.as_i64().unwrap();
        *answered.entry(id).or_default() += 1;
        let Some((version, snapshot)) = outstanding.get(&id) else {
            stats.violations.push(format!("response for unknown id {id}"));
            return;
        };
        let Some(result) = v.get("result") else { return };
        if let Some(sentence) = result.get("sentence") {
            if result["version"].as_u64() != Some(*version) {
                stats.violations.push(format!("id {id}: answered at version {} not {version}", result["version"]));
            }
            let s = utf16_to_byte(snapshot, sentence["start"].as_u64().unwrap() as usize);
            let e = utf16_to_byte(snapshot, sentence["end"].as_u64().unwrap() as usize);
            let (Some(s), Some(e)) = (s, e) else {
                stats.violations.push(format!("id {id}: sentence range outside snapshot"));
                return;
            };
            for c in result["candidates"].as_array().unwrap() {
                let diff: Vec<DiffRun> = serde_json::from_value(c["diff"].clone()).unwrap();
                if apply_diff(&snapshot[s..e], &diff).ok().as_deref() != c["text"].as_str() {
                    stats.violations.push(format!("id {id}: diff does not reproduce candidate"));
                }
            }
        }
    };

    for _ in 0..messages {
        stats.messages += 1;
        let with_id = rng.random_bool(0.7);
        let id = if with_id {
            next_id += 1;
            Some(next_id)
        } else {
            None
        };
        let roll = rng.random_range(0..100);
        let mut expect_applied: Option<String> = None;
        let frame = if roll < 40 {
            let (s, e) = random_range(&mut rng, &client_text);
            let insert = *PIECES.choose(&mut rng).unwrap();
            let (bs, be) = (utf16_to_byte(&client_text, s).unwrap(), utf16_to_byte(&client_text, e).unwrap());
            let mut next = client_text.clone();
            next.replace_range(bs..be, insert);
            expect_applied = Some(next);
            json!({"method": "document/didChange", "params": {"version": client_version + 1, "range": {"start": s, "end": e}, "text": insert}})
                .to_string()
        } else if roll < 45 {
            let text: String = (0..rng.random_range(0..6)).map(|_| *PIECES.choose(&mut rng).unwrap()).collect();
            expect_applied = Some(text.clone());
            json!({"method": "document/didChange", "params": {"version": client_version + 1, "text": text}}).to_string()
        } else if roll < 50 {
            let bad = if rng.random_bool(0.5) { client_version } else { client_version + 2 + rng.random_range(0..3) };
            json!({"method": "document/didChange", "params": {"version": bad, "text": "stale"}}).to_string()
        } else if roll < 70 {
            let (s, e) = random_range(&mut rng, &client_text);
            json!({"method": "revision/request", "params": {"range": {"start": s, "end": e}}}).to_string()
        } else if roll < 80 {
            let b = boundaries(&client_text);
            let pos = *b.choose(&mut rng).unwrap();
            let title = rng.random_bool(0.5).then_some("T");
            json!({"method": "completion/request", "params": {"position": pos, "title": title, "section": "Related work"}}).to_string()
        } else if roll < 85 {
            json!({"method": "bogus/method", "params": {}}).to_string()
        } else if roll < 90 {
            json!({"method": "revision/request", "params": {"range": "nope"}}).to_string()
        } else if roll < 95 {
            json!({"method": "completion/request", "params": {"position": 1_000_000}}).to_string()
        } else {
            "{\"id\": ".to_string()
        };
        // Attach the id by re-parsing; malformed frames stay malformed.
        let frame = match (id, serde_json::from_str::<Value>(&frame)) {
            (Some(id), Ok(mut v)) => {
                v["id"] = json!(id);
                stats.requests += 1;
                outstanding.insert(id, (client_version, client_text.clone()));
                v.to_string()
            }
            _ => frame,
        };
        let before = (session.version(), session.text().to_string());
        for action in session.handle(&frame) {
            match action {
                Action::Send(v) => record(&v, &mut stats, &mut answered, &outstanding),
                Action::Run(job) => pending.push(Pending { job: *job }),
                Action::ScheduleDiagnostics => {
                    if rng.random_bool(0.05) {
                        let (version, text) = session.snapshot();
                        let report = engine.check(&text);
                        if session.publish(version, &text, &report).is_none() {
                            stats.violations.push("fresh diagnostics rejected".into());
                        }
                        if session.publish(version.wrapping_sub(1), &text, &report).is_some() {
                            stats.violations.push("stale diagnostics published".into());
                        }
                    }
                }
                Action::Close => stats.violations.push("unexpected close".into()),
            }
        }
        if let Some(next) = expect_applied {
            client_text = next;
            client_version += 1;
            stats.applied_changes += 1;
        } else if (session.version(), session.text()) != (before.0, before.1.as_str()) {
            stats.violations.push("document changed without a valid change".into());
        }
        if session.version() != client_version || session.text() != client_text {
            stats.violations.push(format!("diverged at message {}", stats.messages));
            break;
        }
        while !pending.is_empty() && rng.random_bool(0.5) {
            let k = rng.random_range(0..pending.len());
            let p = pending.swap_remove(k);
            let out = session.finish(engine.run(p.job));
            record(&out, &mut stats, &mut answered, &outstanding);
        }
    }
    while let Some(p) = pending.pop() {
        let out = session.finish(engine.run(p.job));
        record(&out, &mut stats, &mut answered, &outstanding);
    }
    for id in outstanding.keys() {
        match answered.get(id) {
            Some(1) => {}
            Some(n) => stats.violations.push(format!("id {id} answered {n} times")),
            None => stats.violations.push(format!("id {id} never answered")),
        }
    }
    stats
}
