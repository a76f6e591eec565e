//! Remote scorer speaking the de-facto JSON completions shape:
//! `{"model", "prompt", "max_tokens", "logprobs": true, "echo": bool}` in,
//! per-token logprobs out. Any local inference server can stand in for the
//! fine-tuned model.

use std::collections::HashMap;
use std::time::Duration;

use super::{AnswerScore, ContinuationScore, Scorer, ScorerConfig, ScorerError, TOKEN_ENV_VAR};
use crate::util::Semaphore;

#[derive(serde::Deserialize)]
struct CompletionResponse {
    choices: Vec<Choice>,
}

#[derive(serde::Deserialize)]
struct Choice {
    #[serde(default)]
    logprobs: Option<Logprobs>,
}

#[derive(serde::Deserialize, Default)]
struct Logprobs {
    #[serde(default)]
    tokens: Vec<String>,
    #[serde(default)]
    token_logprobs: Vec<Option<f64>>,
    #[serde(default)]
    top_logprobs: Vec<Option<HashMap<String, f64>>>,
    /// Byte offset of each echoed token within the request prompt.
    #[serde(default)]
    text_offset: Vec<usize>,
}

pub struct RemoteScorer {
    agent: ureq::Agent,
    endpoint: String,
    model: String,
    yes_token: String,
    no_token: String,
    max_retries: u32,
    backoff: Duration,
    bearer: Option<String>,
    gate: Semaphore,
}

impl RemoteScorer {
    /// Reads the bearer token from [`TOKEN_ENV_VAR`] if set.
    pub fn new(cfg: &ScorerConfig) -> Result<Self, ScorerError> {
        cfg.validate()?;
        let endpoint = cfg
            .endpoint
            .clone()
            .ok_or_else(|| ScorerError::Config("remote scorer requires an endpoint".into()))?;
        let agent = ureq::AgentBuilder::new()
            .timeout(Duration::from_millis(cfg.timeout_ms))
            .build();
        Ok(Self {
            agent,
            endpoint,
            model: cfg.model.clone().unwrap_or_else(|| "default".into()),
            yes_token: cfg.yes_token.clone(),
            no_token: cfg.no_token.clone(),
            max_retries: cfg.max_retries,
            backoff: Duration::from_millis(cfg.backoff_ms),
            bearer: std::env::var(TOKEN_ENV_VAR).ok(),
            gate: Semaphore::new(cfg.max_in_flight),
        })
    }

    /// One logical request: at most `1 + max_retries` attempts with the exact
    /// same body, exponential backoff between attempts. Timeouts, transport
    /// failures and 5xx are retried; 4xx and malformed bodies fail fast.
    fn request(&self, body: &serde_json::Value) -> Result<CompletionResponse, ScorerError> {
        let _permit = self.gate.acquire();
        let attempts = self.max_retries + 1;
        let mut last_msg = String::new();
        let mut timed_out = false;
        for attempt in 0..attempts {
            if attempt > 0 {
                let factor = 1u32 << (attempt - 1).min(10);
                std::thread::sleep(self.backoff.saturating_mul(factor));
            }
            let mut req = self
                .agent
                .post(&self.endpoint)
                .set("Content-Type", "application/json");
            if let Some(token) = &self.bearer {
                req = req.set("Authorization", &format!("Bearer {token}"));
            }
            match req.send_json(body) {
                Ok(resp) => {
                    return resp
                        .into_json::<CompletionResponse>()
                        .map_err(|e| ScorerError::RemoteProtocol(e.to_string()))
                }
                Err(ureq::Error::Status(code, resp)) if (500..=599).contains(&code) => {
                    last_msg = format!("HTTP {code}: {}", resp.status_text());
                    timed_out = false;
                }
                Err(ureq::Error::Status(code, resp)) => {
                    return Err(ScorerError::RemoteProtocol(format!(
                        "HTTP {code}: {}",
                        resp.status_text()
                    )))
                }
                Err(ureq::Error::Transport(t)) => {
                    last_msg = t.to_string();
                    let lower = last_msg.to_lowercase();
                    timed_out = lower.contains("timed out") || lower.contains("timeout");
                }
            }
        }
        if timed_out {
            Err(ScorerError::RemoteTimeout {
                attempts,
                last: last_msg,
            })
        } else {
            Err(ScorerError::RemoteTransport {
                attempts,
                last: last_msg,
            })
        }
    }
}

impl Scorer for RemoteScorer {
    fn score_answer(&self, prompt: &str) -> Result<AnswerScore, ScorerError> {
        if prompt.is_empty() {
            return Err(ScorerError::EmptyPrompt);
        }
        let body = serde_json::json!({
            "model": self.model,
            "prompt": prompt,
            "max_tokens": 1,
            "logprobs": true,
            "echo": false,
        });
        let resp = self.request(&body)?;
        let choice = resp
            .choices
            .first()
            .ok_or_else(|| ScorerError::RemoteProtocol("response has no choices".into()))?;
        let top = choice
            .logprobs
            .as_ref()
            .and_then(|lp| lp.top_logprobs.first())
            .and_then(|m| m.as_ref())
            .ok_or_else(|| ScorerError::RemoteProtocol("response has no top_logprobs".into()))?;
        let yes = *top
            .get(&self.yes_token)
            .ok_or_else(|| ScorerError::TokenNotInVocabulary(self.yes_token.clone()))?;
        let no = *top
            .get(&self.no_token)
            .ok_or_else(|| ScorerError::TokenNotInVocabulary(self.no_token.clone()))?;
        Ok(AnswerScore::from_logits(yes, no))
    }

    fn score_continuation(
        &self,
        prompt: &str,
        target: &str,
    ) -> Result<ContinuationScore, ScorerError> {
        if target.is_empty() {
            return Err(ScorerError::InvalidTarget);
        }
        let full = format!("{prompt}{target}");
        let body = serde_json::json!({
            "model": self.model,
            "prompt": full,
            "max_tokens": 0,
            "logprobs": true,
            "echo": true,
        });
        let resp = self.request(&body)?;
        let lp = resp
            .choices
            .first()
            .and_then(|c| c.logprobs.as_ref())
            .ok_or_else(|| ScorerError::RemoteProtocol("response has no logprobs".into()))?;
        if lp.text_offset.len() != lp.token_logprobs.len() {
            return Err(ScorerError::RemoteProtocol(
                "text_offset and token_logprobs lengths differ".into(),
            ));
        }
        let _ = &lp.tokens;
        let boundary = prompt.len();
        let mut logprobs = Vec::new();
        for (offset, value) in lp.text_offset.iter().zip(&lp.token_logprobs) {
            if *offset >= boundary {
                match value {
                    Some(v) => logprobs.push(*v),
                    None => {
                        return Err(ScorerError::RemoteProtocol(
                            "target token has null logprob".into(),
                        ))
                    }
                }
            }
        }
        if logprobs.is_empty() {
            return Err(ScorerError::RemoteProtocol(
                "echo did not cover the target span".into(),
            ));
        }
        Ok(ContinuationScore::new(logprobs))
    }
}
