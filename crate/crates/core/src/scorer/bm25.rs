//! Robertson BM25 over the session log's candidate documents.

use std::collections::{HashMap, HashSet};

use super::{
    final_clause_texts, unigram_continuation, AnswerScore, ContinuationScore, Scorer, ScorerError,
};
use crate::session::Session;

/// Corpus-level statistics: document count, per-term document frequency, and
/// average document length, all over whitespace tokens.
#[derive(Debug, Clone)]
pub struct Bm25Stats {
    pub doc_count: usize,
    pub avgdl: f64,
    df: HashMap<String, usize>,
}

impl Bm25Stats {
    /// Build stats from raw document texts.
    pub fn from_texts<'a, I: IntoIterator<Item = &'a str>>(texts: I) -> Result<Self, ScorerError> {
        let mut doc_count = 0usize;
        let mut total_len = 0usize;
        let mut df: HashMap<String, usize> = HashMap::new();
        for text in texts {
            doc_count += 1;
            let tokens: Vec<&str> = text.split_whitespace().collect();
            total_len += tokens.len();
            let unique: HashSet<&str> = tokens.into_iter().collect();
            for t in unique {
                *df.entry(t.to_string()).or_insert(0) += 1;
            }
        }
        if doc_count == 0 {
            return Err(ScorerError::EmptyCorpusStats);
        }
        Ok(Self {
            doc_count,
            avgdl: total_len as f64 / doc_count as f64,
            df,
        })
    }

    pub fn df(&self, term: &str) -> usize {
        self.df.get(term).copied().unwrap_or(0)
    }
}

/// Robertson BM25:
/// `sum over query tokens of idf(t) * tf*(k1+1) / (tf + k1*(1-b+b*dl/avgdl))`
/// with `idf(t) = ln(1 + (N-df+0.5)/(df+0.5))`. Query-term multiplicity
/// counts per occurrence, matching the classic formulation.
pub fn bm25_score(
    query_tokens: &[&str],
    doc_tokens: &[&str],
    stats: &Bm25Stats,
    k1: f64,
    b: f64,
) -> f64 {
    let mut tf: HashMap<&str, usize> = HashMap::new();
    for t in doc_tokens {
        *tf.entry(t).or_insert(0) += 1;
    }
    let dl = doc_tokens.len() as f64;
    let n = stats.doc_count as f64;
    let mut score = 0.0;
    for t in query_tokens {
        let freq = tf.get(t).copied().unwrap_or(0) as f64;
        if freq == 0.0 {
            continue;
        }
        let df = stats.df(t) as f64;
        let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
        let norm = freq + k1 * (1.0 - b + b * dl / stats.avgdl);
        score += idf * freq * (k1 + 1.0) / norm;
    }
    score
}

/// BM25-backed scorer. `score_answer` reads the final clause of the prompt,
/// scores the document text against the query text, and maps the score
/// through the monotone squash `4*s/(1+s) - 2` into `yes_logit`
/// (`no_logit = 0`), so ranking order equals BM25 order.
#[derive(Debug, Clone)]
pub struct Bm25Scorer {
    stats: Bm25Stats,
    k1: f64,
    b: f64,
}

impl Bm25Scorer {
    pub fn new(stats: Bm25Stats, k1: f64, b: f64) -> Self {
        Self { stats, k1, b }
    }

    /// Corpus = the distinct candidate documents of the given sessions,
    /// deduplicated by doc_id (first occurrence wins).
    pub fn from_sessions(sessions: &[Session], k1: f64, b: f64) -> Result<Self, ScorerError> {
        let mut seen: HashSet<&str> = HashSet::new();
        let mut texts: Vec<&str> = Vec::new();
        for s in sessions {
            for q in &s.queries {
                for d in &q.candidates {
                    if seen.insert(&d.doc_id) {
                        texts.push(&d.text);
                    }
                }
            }
        }
        Ok(Self::new(Bm25Stats::from_texts(texts)?, k1, b))
    }

    pub fn raw_score(&self, query: &str, doc: &str) -> f64 {
        let q: Vec<&str> = query.split_whitespace().collect();
        let d: Vec<&str> = doc.split_whitespace().collect();
        bm25_score(&q, &d, &self.stats, self.k1, self.b)
    }
}

impl Scorer for Bm25Scorer {
    fn score_answer(&self, prompt: &str) -> Result<AnswerScore, ScorerError> {
        if prompt.is_empty() {
            return Err(ScorerError::EmptyPrompt);
        }
        let s = final_clause_texts(prompt)
            .map(|(q, d)| self.raw_score(&q, &d))
            .unwrap_or(0.0);
        let yes_logit = 4.0 * s / (1.0 + s) - 2.0;
        Ok(AnswerScore::from_logits(yes_logit, 0.0))
    }

    fn score_continuation(
        &self,
        prompt: &str,
        target: &str,
    ) -> Result<ContinuationScore, ScorerError> {
        unigram_continuation(prompt, target)
    }
}
