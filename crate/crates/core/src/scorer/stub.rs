//! Bundled stub HTTP server with scripted logprobs.
//!
//! Tests (and anyone replaying a remote run) script responses per prompt in a
//! JSONL fixture keyed by prompt hash:
//!
//! ```text
//! {"kind":"answer","prompt_hash":"98f1...","top_logprobs":{"yes":-0.1,"no":-2.3}}
//! {"kind":"echo","prompt_hash":"...","tokens":[" x"],"token_logprobs":[-0.5],"text_offset":[42]}
//! {"kind":"timeout","prompt_hash":"...","sleep_ms":1500}
//! {"kind":"http_error","prompt_hash":"...","status":500}
//! ```
//!
//! `prompt_hash` is [`prompt_hash`] of the request's `prompt` field; the
//! literal hash `"*"` matches any prompt not matched exactly.

use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::util::fnv1a64;

/// Fixture key for a prompt: FNV-1a 64 as 16 lowercase hex chars.
pub fn prompt_hash(prompt: &str) -> String {
    format!("{:016x}", fnv1a64(prompt.as_bytes()))
}

/// One scripted behavior, keyed by prompt hash.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StubRule {
    /// Answer-token logprobs for a `max_tokens: 1` request.
    Answer {
        prompt_hash: String,
        top_logprobs: BTreeMap<String, f64>,
    },
    /// Echoed target tokens for a `max_tokens: 0, echo: true` request.
    Echo {
        prompt_hash: String,
        tokens: Vec<String>,
        token_logprobs: Vec<f64>,
        text_offset: Vec<usize>,
    },
    /// Hold the request long enough for the client to give up.
    Timeout { prompt_hash: String, sleep_ms: u64 },
    /// Respond with an HTTP error status.
    HttpError { prompt_hash: String, status: u16 },
}

impl StubRule {
    fn hash(&self) -> &str {
        match self {
            StubRule::Answer { prompt_hash, .. }
            | StubRule::Echo { prompt_hash, .. }
            | StubRule::Timeout { prompt_hash, .. }
            | StubRule::HttpError { prompt_hash, .. } => prompt_hash,
        }
    }
}

/// Serialize rules to the JSONL fixture format.
pub fn rules_to_jsonl(rules: &[StubRule]) -> String {
    let mut out = String::new();
    for r in rules {
        out.push_str(&serde_json::to_string(r).expect("rule serializes"));
        out.push('\n');
    }
    out
}

/// Load rules from the JSONL fixture format.
pub fn rules_from_jsonl(text: &str) -> Result<Vec<StubRule>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}

/// In-process stub server. Binds an ephemeral port on localhost and answers
/// completion requests from its rule table until dropped.
pub struct StubServer {
    url: String,
    stop: Arc<AtomicBool>,
    hits: Arc<Mutex<HashMap<String, usize>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start(rules: Vec<StubRule>) -> std::io::Result<Self> {
        let server = tiny_http::Server::http("127.0.0.1:0")
            .map_err(|e| std::io::Error::other(e.to_string()))?;
        let addr = server
            .server_addr()
            .to_ip()
            .ok_or_else(|| std::io::Error::other("no ip addr"))?;
        let url = format!("http://{addr}");
        let stop = Arc::new(AtomicBool::new(false));
        let hits = Arc::new(Mutex::new(HashMap::new()));
        let rule_map: HashMap<String, StubRule> = rules
            .into_iter()
            .map(|r| (r.hash().to_string(), r))
            .collect();
        let worker_stop = stop.clone();
        let worker_hits = hits.clone();
        let handle = std::thread::spawn(move || {
            while !worker_stop.load(Ordering::SeqCst) {
                let request = match server.recv_timeout(Duration::from_millis(25)) {
                    Ok(Some(r)) => r,
                    Ok(None) => continue,
                    Err(_) => break,
                };
                serve_one(request, &rule_map, &worker_hits, &worker_stop);
            }
        });
        Ok(Self {
            url,
            stop,
            hits,
            handle: Some(handle),
        })
    }

    /// Endpoint URL, e.g. `http://127.0.0.1:41234`.
    pub fn url(&self) -> &str {
        &self.url
    }

    /// How many requests arrived for a given prompt hash.
    pub fn hits(&self, hash: &str) -> usize {
        self.hits.lock().unwrap().get(hash).copied().unwrap_or(0)
    }
}

impl Drop for StubServer {
    fn drop(&mut self) {
        self.stop.store(true, Ordering::SeqCst);
        if let Some(h) = self.handle.take() {
            let _ = h.join();
        }
    }
}

fn serve_one(
    mut request: tiny_http::Request,
    rules: &HashMap<String, StubRule>,
    hits: &Arc<Mutex<HashMap<String, usize>>>,
    stop: &AtomicBool,
) {
    let mut body = String::new();
    let _ = request.as_reader().read_to_string(&mut body);
    let prompt = serde_json::from_str::<serde_json::Value>(&body)
        .ok()
        .and_then(|v| v.get("prompt").and_then(|p| p.as_str()).map(String::from))
        .unwrap_or_default();
    let hash = prompt_hash(&prompt);
    *hits.lock().unwrap().entry(hash.clone()).or_insert(0) += 1;

    let rule = rules.get(&hash).or_else(|| rules.get("*"));
    let json_header =
        tiny_http::Header::from_bytes(&b"Content-Type"[..], &b"application/json"[..]).unwrap();
    match rule {
        None => {
            let _ = request.respond(
                tiny_http::Response::from_string(format!(
                    "{{\"error\":\"no rule for prompt hash {hash}\"}}"
                ))
                .with_status_code(404)
                .with_header(json_header),
            );
        }
        Some(StubRule::Timeout { sleep_ms, .. }) => {
            // Sleep in slices so dropping the server never waits out a queue
            // of dead requests.
            let mut remaining = *sleep_ms;
            while remaining > 0 && !stop.load(Ordering::SeqCst) {
                let slice = remaining.min(25);
                std::thread::sleep(Duration::from_millis(slice));
                remaining -= slice;
            }
            let _ = request.respond(
                tiny_http::Response::from_string("{\"choices\":[]}")
                    .with_status_code(200)
                    .with_header(json_header),
            );
        }
        Some(StubRule::HttpError { status, .. }) => {
            let _ = request.respond(
                tiny_http::Response::from_string("{}")
                    .with_status_code(*status)
                    .with_header(json_header),
            );
        }
        Some(StubRule::Answer { top_logprobs, .. }) => {
            let (best_token, best_lp) = top_logprobs
                .iter()
                .max_by(|a, b| a.1.total_cmp(b.1))
                .map(|(t, lp)| (t.clone(), *lp))
                .unwrap_or_default();
            let body = serde_json::json!({
                "choices": [{
                    "text": best_token,
                    "logprobs": {
                        "tokens": [best_token],
                        "token_logprobs": [best_lp],
                        "top_logprobs": [top_logprobs],
                        "text_offset": [prompt.len()],
                    }
                }]
            });
            let _ = request.respond(
                tiny_http::Response::from_string(body.to_string())
                    .with_status_code(200)
                    .with_header(json_header),
            );
        }
        Some(StubRule::Echo {
            tokens,
            token_logprobs,
            text_offset,
            ..
        }) => {
            let body = serde_json::json!({
                "choices": [{
                    "text": "",
                    "logprobs": {
                        "tokens": tokens,
                        "token_logprobs": token_logprobs,
                        "top_logprobs": [],
                        "text_offset": text_offset,
                    }
                }]
            });
            let _ = request.respond(
                tiny_http::Response::from_string(body.to_string())
                    .with_status_code(200)
                    .with_header(json_header),
            );
        }
    }
}
