//! Deterministic mock scorer for tests and offline pipeline runs.

use std::collections::HashSet;

use super::{
    final_clause_texts, unigram_continuation, AnswerScore, ContinuationScore, Scorer, ScorerError,
};
use crate::util::{fnv1a64, hash_to_unit};

/// Scores the final clause by token overlap between its query and document
/// texts: `yes_logit = 4 * jaccard - 2` plus seeded hash noise in
/// `[-0.01, 0.01]` for tie-breaking realism, `no_logit = 0`. Pure after
/// construction; identical prompts always score identically.
#[derive(Debug, Clone)]
pub struct MockScorer {
    seed: u64,
}

impl MockScorer {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    fn noise(&self, prompt: &str) -> f64 {
        let mut bytes = Vec::with_capacity(8 + prompt.len());
        bytes.extend_from_slice(&self.seed.to_le_bytes());
        bytes.extend_from_slice(prompt.as_bytes());
        (hash_to_unit(fnv1a64(&bytes)) * 2.0 - 1.0) * 0.01
    }
}

fn jaccard(a: &str, b: &str) -> f64 {
    let sa: HashSet<&str> = a.split_whitespace().collect();
    let sb: HashSet<&str> = b.split_whitespace().collect();
    if sa.is_empty() && sb.is_empty() {
        return 0.0;
    }
    let inter = sa.intersection(&sb).count();
    let union = sa.len() + sb.len() - inter;
    inter as f64 / union as f64
}

impl Scorer for MockScorer {
    fn score_answer(&self, prompt: &str) -> Result<AnswerScore, ScorerError> {
        if prompt.is_empty() {
            return Err(ScorerError::EmptyPrompt);
        }
        // A prompt without a parseable final clause counts as zero overlap.
        let overlap = final_clause_texts(prompt)
            .map(|(q, d)| jaccard(&q, &d))
            .unwrap_or(0.0);
        let yes_logit = 4.0 * overlap - 2.0 + self.noise(prompt);
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
