//! Scorer gateway: a uniform abstraction over anything that can (a) weigh a
//! yes/no answer for a prompt and (b) assign log-probabilities to a target
//! continuation. Implementations: deterministic mock, BM25 lexical, remote
//! HTTP completions endpoint.

mod bm25;
mod mock;
mod remote;
pub mod stub;

pub use bm25::{bm25_score, Bm25Scorer, Bm25Stats};
pub use mock::MockScorer;
pub use remote::RemoteScorer;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::Session;

/// Environment variable holding the bearer token for remote endpoints.
/// Credentials never travel through flags.
pub const TOKEN_ENV_VAR: &str = "SGR_SCORER_TOKEN";

/// Yes/no answer evidence for a prompt.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnswerScore {
    pub yes_logit: f64,
    pub no_logit: f64,
    /// Two-way softmax over (yes, no), computed stably.
    pub prob_yes: f64,
}

impl AnswerScore {
    pub fn from_logits(yes_logit: f64, no_logit: f64) -> Self {
        let d = yes_logit - no_logit;
        let prob_yes = if d >= 0.0 {
            1.0 / (1.0 + (-d).exp())
        } else {
            let e = d.exp();
            e / (1.0 + e)
        };
        Self {
            yes_logit,
            no_logit,
            prob_yes,
        }
    }
}

/// Per-token log-probabilities of a target continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationScore {
    pub token_logprobs: Vec<f64>,
    /// Sum of `token_logprobs`.
    pub total: f64,
}

impl ContinuationScore {
    pub fn new(token_logprobs: Vec<f64>) -> Self {
        let total = token_logprobs.iter().sum();
        Self {
            token_logprobs,
            total,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum ScorerError {
    #[error("prompt is empty")]
    EmptyPrompt,
    #[error("target tokenizes to zero tokens")]
    InvalidTarget,
    #[error("corpus statistics are empty")]
    EmptyCorpusStats,
    #[error("remote request timed out after {attempts} attempts: {last}")]
    RemoteTimeout { attempts: u32, last: String },
    #[error("remote transport failure after {attempts} attempts: {last}")]
    RemoteTransport { attempts: u32, last: String },
    #[error("remote protocol error: {0}")]
    RemoteProtocol(String),
    #[error("endpoint cannot report logprob for token `{0}`")]
    TokenNotInVocabulary(String),
    #[error("invalid scorer configuration: {0}")]
    Config(String),
}

/// Anything that can stand in for the fine-tuned model: answers a prompt with
/// yes/no evidence and scores target continuations token by token.
pub trait Scorer: Send + Sync {
    fn score_answer(&self, prompt: &str) -> Result<AnswerScore, ScorerError>;
    fn score_continuation(
        &self,
        prompt: &str,
        target: &str,
    ) -> Result<ContinuationScore, ScorerError>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ScorerKind {
    Mock,
    Bm25,
    Remote,
}

fn default_timeout_ms() -> u64 {
    30_000
}
fn default_max_retries() -> u32 {
    2
}
fn default_max_in_flight() -> usize {
    4
}
fn default_backoff_ms() -> u64 {
    250
}
fn default_k1() -> f64 {
    1.2
}
fn default_b() -> f64 {
    0.75
}
fn default_yes_token() -> String {
    "yes".into()
}
fn default_no_token() -> String {
    "no".into()
}

/// Scorer selection and tuning. Unknown keys are rejected.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScorerConfig {
    pub kind: ScorerKind,
    /// Remote only.
    #[serde(default)]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_yes_token")]
    pub yes_token: String,
    #[serde(default = "default_no_token")]
    pub no_token: String,
    /// BM25 only.
    #[serde(default = "default_k1")]
    pub k1: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    /// Mock only.
    #[serde(default)]
    pub seed: u64,
}

impl ScorerConfig {
    pub fn new(kind: ScorerKind) -> Self {
        Self {
            kind,
            endpoint: None,
            model: None,
            timeout_ms: default_timeout_ms(),
            max_retries: default_max_retries(),
            max_in_flight: default_max_in_flight(),
            backoff_ms: default_backoff_ms(),
            yes_token: default_yes_token(),
            no_token: default_no_token(),
            k1: default_k1(),
            b: default_b(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ScorerError> {
        if self.timeout_ms == 0 {
            return Err(ScorerError::Config("timeout_ms must be positive".into()));
        }
        if self.max_retries == 0 {
            return Err(ScorerError::Config("max_retries must be positive".into()));
        }
        if self.max_in_flight == 0 {
            return Err(ScorerError::Config("max_in_flight must be positive".into()));
        }
        if self.k1 <= 0.0 {
            return Err(ScorerError::Config("k1 must be > 0".into()));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(ScorerError::Config("b must lie in [0, 1]".into()));
        }
        if self.kind == ScorerKind::Remote && self.endpoint.is_none() {
            return Err(ScorerError::Config(
                "remote scorer requires an endpoint".into(),
            ));
        }
        Ok(())
    }
}

/// Build a scorer from config. BM25 needs the sessions whose candidate
/// documents form the scoring corpus.
pub fn build_scorer(
    cfg: &ScorerConfig,
    sessions: Option<&[Session]>,
) -> Result<Box<dyn Scorer>, ScorerError> {
    cfg.validate()?;
    match cfg.kind {
        ScorerKind::Mock => Ok(Box::new(MockScorer::new(cfg.seed))),
        ScorerKind::Bm25 => {
            let sessions = sessions.ok_or(ScorerError::EmptyCorpusStats)?;
            Ok(Box::new(Bm25Scorer::from_sessions(
                sessions, cfg.k1, cfg.b,
            )?))
        }
        ScorerKind::Remote => Ok(Box::new(RemoteScorer::new(cfg)?)),
    }
}

/// Add-one-smoothed unigram over the prompt's whitespace tokens, shared by
/// the mock and BM25 scorers. With an empty prompt every target token gets
/// exactly `ln(1/V)`.
pub(crate) const UNIGRAM_VOCAB: f64 = 1024.0;

pub(crate) fn unigram_continuation(
    prompt: &str,
    target: &str,
) -> Result<ContinuationScore, ScorerError> {
    let target_tokens: Vec<&str> = target.split_whitespace().collect();
    if target_tokens.is_empty() {
        return Err(ScorerError::InvalidTarget);
    }
    let mut counts: std::collections::HashMap<&str, usize> = std::collections::HashMap::new();
    let mut prompt_total = 0usize;
    for tok in prompt.split_whitespace() {
        *counts.entry(tok).or_insert(0) += 1;
        prompt_total += 1;
    }
    let denominator = prompt_total as f64 + UNIGRAM_VOCAB;
    let logprobs = target_tokens
        .iter()
        .map(|tok| {
            let c = counts.get(tok).copied().unwrap_or(0) as f64;
            ((c + 1.0) / denominator).ln()
        })
        .collect();
    Ok(ContinuationScore::new(logprobs))
}

/// Extract the (query text, document text) pair from a prompt's final clause.
/// Lexical scorers use this to see what they are being asked about.
pub(crate) fn final_clause_texts(prompt: &str) -> Option<(String, String)> {
    let last_line = prompt.rsplit('\n').next()?;
    match crate::grammar::parse_clause(last_line) {
        Ok(crate::grammar::ClauseShape::Full { src, dst, .. }) => Some((src.text, dst.text)),
        _ => None,
    }
}
