//! Session data model, JSONL ingestion/validation, and corpus statistics.
//!
//! The canonical log format is one JSON object per line:
//!
//! ```text
//! {"session_id":"s1","queries":[{"query_id":"q1","text":"a","timestamp":10,
//!   "candidates":[{"doc_id":"d1","text":"x","click":1}]}]}
//! ```

use std::io::BufRead;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A candidate document with its binary click label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub text: String,
    /// 0 = not clicked, 1 = clicked.
    pub click: u8,
}

/// One issued query with its ordered candidate list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    pub query_id: String,
    pub text: String,
    /// Issue time in integer seconds.
    pub timestamp: i64,
    pub candidates: Vec<Document>,
}

impl Query {
    /// Candidates with `click == 1`, in candidate order.
    pub fn clicked(&self) -> Vec<Document> {
        self.candidates
            .iter()
            .filter(|d| d.click == 1)
            .cloned()
            .collect()
    }
}

/// A user's search session: queries ordered by non-decreasing timestamp.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub queries: Vec<Query>,
}

/// What a ranker is allowed to see at step `i`: the historical queries with
/// their clicked documents, plus the current query.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionContext {
    pub session_id: String,
    /// 1-based step index within the session.
    pub step: usize,
    /// Steps `1..step`, each paired with only its clicked documents. A step
    /// without clicks still appears, with an empty document list.
    pub history: Vec<(Query, Vec<Document>)>,
    pub current_query: Query,
}

/// Corpus shape summary. Token = whitespace-delimited unit throughout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub session_count: usize,
    pub query_count: usize,
    pub avg_queries_per_session: f64,
    pub avg_docs_per_query: f64,
    pub avg_query_len_tokens: f64,
    pub avg_doc_len_tokens: f64,
    pub avg_clicks_per_query: f64,
}

/// Structured per-line ingestion error. Carries the 1-based line number;
/// a bad line never aborts the stream.
#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum SessionError {
    #[error("line {line}: invalid JSON: {reason}")]
    InvalidJson { line: usize, reason: String },
    #[error("line {line}: read error: {reason}")]
    Read { line: usize, reason: String },
    #[error("line {line}: missing or empty field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("line {line}: session has no queries")]
    EmptySession { line: usize },
    #[error("line {line}: query `{query_id}`: timestamp {next} precedes {prev}")]
    UnorderedTimestamps {
        line: usize,
        query_id: String,
        prev: i64,
        next: i64,
    },
    #[error("line {line}: query `{query_id}`: doc `{doc_id}`: click value {value} not in {{0,1}}")]
    BadClickValue {
        line: usize,
        query_id: String,
        doc_id: String,
        value: i64,
    },
    #[error("line {line}: query `{query_id}`: duplicate doc_id `{doc_id}`")]
    DuplicateDocIdInQuery {
        line: usize,
        query_id: String,
        doc_id: String,
    },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("step {step} out of range for session with {len} queries")]
    StepOutOfRange { step: usize, len: usize },
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum StatsError {
    #[error("cannot compute statistics over an empty corpus")]
    EmptyCorpus,
}

// Loose mirror of the wire schema; click is widened so out-of-range values
// surface as BadClickValue instead of an opaque serde error.
#[derive(Deserialize)]
struct RawSession {
    session_id: String,
    queries: Vec<RawQuery>,
}

#[derive(Deserialize)]
struct RawQuery {
    query_id: String,
    text: String,
    timestamp: i64,
    candidates: Vec<RawDocument>,
}

#[derive(Deserialize)]
struct RawDocument {
    doc_id: String,
    text: String,
    click: i64,
}

fn validate(raw: RawSession, line: usize) -> Result<Session, SessionError> {
    if raw.session_id.is_empty() {
        return Err(SessionError::MissingField {
            line,
            field: "session_id".into(),
        });
    }
    if raw.queries.is_empty() {
        return Err(SessionError::EmptySession { line });
    }
    let mut queries = Vec::with_capacity(raw.queries.len());
    let mut prev_ts: Option<i64> = None;
    for rq in raw.queries {
        if rq.query_id.is_empty() {
            return Err(SessionError::MissingField {
                line,
                field: "query_id".into(),
            });
        }
        if let Some(prev) = prev_ts {
            // Equal timestamps are allowed; file order breaks ties.
            if rq.timestamp < prev {
                return Err(SessionError::UnorderedTimestamps {
                    line,
                    query_id: rq.query_id,
                    prev,
                    next: rq.timestamp,
                });
            }
        }
        prev_ts = Some(rq.timestamp);
        let mut seen = std::collections::HashSet::new();
        let mut candidates = Vec::with_capacity(rq.candidates.len());
        for rd in rq.candidates {
            if rd.doc_id.is_empty() {
                return Err(SessionError::MissingField {
                    line,
                    field: "doc_id".into(),
                });
            }
            if !(rd.click == 0 || rd.click == 1) {
                return Err(SessionError::BadClickValue {
                    line,
                    query_id: rq.query_id,
                    doc_id: rd.doc_id,
                    value: rd.click,
                });
            }
            if !seen.insert(rd.doc_id.clone()) {
                return Err(SessionError::DuplicateDocIdInQuery {
                    line,
                    query_id: rq.query_id,
                    doc_id: rd.doc_id,
                });
            }
            candidates.push(Document {
                doc_id: rd.doc_id,
                text: rd.text,
                click: rd.click as u8,
            });
        }
        queries.push(Query {
            query_id: rq.query_id,
            text: rq.text,
            timestamp: rq.timestamp,
            candidates,
        });
    }
    Ok(Session {
        session_id: raw.session_id,
        queries,
    })
}

fn parse_line(line: &str, line_no: usize) -> Result<Session, SessionError> {
    match serde_json::from_str::<RawSession>(line) {
        Ok(raw) => validate(raw, line_no),
        Err(e) => {
            let msg = e.to_string();
            // serde reports absent required fields as "missing field `name`".
            if let Some(rest) = msg.strip_prefix("missing field `") {
                if let Some(field) = rest.split('`').next() {
                    return Err(SessionError::MissingField {
                        line: line_no,
                        field: field.to_string(),
                    });
                }
            }
            Err(SessionError::InvalidJson {
                line: line_no,
                reason: msg,
            })
        }
    }
}

/// Streaming iterator over a session log. Blank lines are skipped; every
/// other line yields either a validated [`Session`] or a [`SessionError`].
pub struct SessionLogIter<R> {
    reader: R,
    line_no: usize,
    buf: String,
}

impl<R: BufRead> Iterator for SessionLogIter<R> {
    type Item = Result<Session, SessionError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            self.buf.clear();
            self.line_no += 1;
            match self.reader.read_line(&mut self.buf) {
                Ok(0) => return None,
                Ok(_) => {
                    let line = self.buf.trim_end_matches(['\n', '\r']);
                    if line.trim().is_empty() {
                        continue;
                    }
                    return Some(parse_line(line, self.line_no));
                }
                Err(e) => {
                    return Some(Err(SessionError::Read {
                        line: self.line_no,
                        reason: e.to_string(),
                    }))
                }
            }
        }
    }
}

/// Parse a line-oriented session log without aborting on bad lines.
pub fn parse_session_log<R: BufRead>(reader: R) -> SessionLogIter<R> {
    SessionLogIter {
        reader,
        line_no: 0,
        buf: String::new(),
    }
}

/// Convenience wrapper splitting results into sessions and errors,
/// both in input order.
pub fn parse_session_str(text: &str) -> (Vec<Session>, Vec<SessionError>) {
    let mut sessions = Vec::new();
    let mut errors = Vec::new();
    for item in parse_session_log(text.as_bytes()) {
        match item {
            Ok(s) => sessions.push(s),
            Err(e) => errors.push(e),
        }
    }
    (sessions, errors)
}

/// Serialize sessions back to the canonical JSONL form, one object per line,
/// `\n` terminated.
pub fn to_jsonl(sessions: &[Session]) -> String {
    let mut out = String::new();
    for s in sessions {
        out.push_str(&serde_json::to_string(s).expect("session serializes"));
        out.push('\n');
    }
    out
}

/// Build the step-`i` context: history `1..i-1` restricted to clicked
/// documents, current query `q_i`. `i` is 1-based.
pub fn make_context(session: &Session, step: usize) -> Result<SessionContext, ContextError> {
    let len = session.queries.len();
    if step == 0 || step > len {
        return Err(ContextError::StepOutOfRange { step, len });
    }
    let history = session.queries[..step - 1]
        .iter()
        .map(|q| (q.clone(), q.clicked()))
        .collect();
    Ok(SessionContext {
        session_id: session.session_id.clone(),
        step,
        history,
        current_query: session.queries[step - 1].clone(),
    })
}

fn token_count(text: &str) -> usize {
    text.split_whitespace().count()
}

/// Arithmetic-mean corpus statistics over the stated denominators.
pub fn compute_stats(sessions: &[Session]) -> Result<CorpusStats, StatsError> {
    if sessions.is_empty() {
        return Err(StatsError::EmptyCorpus);
    }
    let session_count = sessions.len();
    let mut query_count = 0usize;
    let mut doc_count = 0usize;
    let mut query_tokens = 0usize;
    let mut doc_tokens = 0usize;
    let mut clicks = 0usize;
    for s in sessions {
        query_count += s.queries.len();
        for q in &s.queries {
            query_tokens += token_count(&q.text);
            doc_count += q.candidates.len();
            for d in &q.candidates {
                doc_tokens += token_count(&d.text);
                clicks += usize::from(d.click == 1);
            }
        }
    }
    let per_query = |total: usize| {
        if query_count == 0 {
            0.0
        } else {
            total as f64 / query_count as f64
        }
    };
    Ok(CorpusStats {
        session_count,
        query_count,
        avg_queries_per_session: query_count as f64 / session_count as f64,
        avg_docs_per_query: per_query(doc_count),
        avg_query_len_tokens: per_query(query_tokens),
        avg_doc_len_tokens: if doc_count == 0 {
            0.0
        } else {
            doc_tokens as f64 / doc_count as f64
        },
        avg_clicks_per_query: per_query(clicks),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, click: u8) -> Document {
        Document {
            doc_id: id.into(),
            text: format!("text of {id}"),
            click,
        }
    }

    fn query(id: &str, ts: i64, docs: Vec<Document>) -> Query {
        Query {
            query_id: id.into(),
            text: format!("query {id}"),
            timestamp: ts,
            candidates: docs,
        }
    }

    #[test]
    fn parses_minimal_record() {
        let line = r#"{"session_id":"s1","queries":[{"query_id":"q1","text":"a","timestamp":10,"candidates":[{"doc_id":"d1","text":"x","click":1}]}]}"#;
        let (sessions, errors) = parse_session_str(line);
        assert!(errors.is_empty(), "{errors:?}");
        assert_eq!(sessions.len(), 1);
        assert_eq!(sessions[0].queries.len(), 1);
        assert_eq!(sessions[0].queries[0].candidates[0].click, 1);
    }

    #[test]
    fn bad_click_value_is_structured() {
        let line = r#"{"session_id":"s1","queries":[{"query_id":"q1","text":"a","timestamp":10,"candidates":[{"doc_id":"d1","text":"x","click":2}]}]}"#;
        let (sessions, errors) = parse_session_str(line);
        assert!(sessions.is_empty());
        assert_eq!(
            errors,
            vec![SessionError::BadClickValue {
                line: 1,
                query_id: "q1".into(),
                doc_id: "d1".into(),
                value: 2
            }]
        );
    }

    #[test]
    fn unordered_timestamps_rejected() {
        let line = r#"{"session_id":"s1","queries":[{"query_id":"q1","text":"a","timestamp":20,"candidates":[]},{"query_id":"q2","text":"b","timestamp":10,"candidates":[]}]}"#;
        let (_, errors) = parse_session_str(line);
        assert!(matches!(
            errors[0],
            SessionError::UnorderedTimestamps { line: 1, .. }
        ));
    }

    #[test]
    fn equal_timestamps_allowed() {
        let line = r#"{"session_id":"s1","queries":[{"query_id":"q1","text":"a","timestamp":10,"candidates":[]},{"query_id":"q2","text":"b","timestamp":10,"candidates":[]}]}"#;
        let (sessions, errors) = parse_session_str(line);
        assert!(errors.is_empty());
        assert_eq!(sessions[0].queries.len(), 2);
    }

    #[test]
    fn duplicate_doc_id_rejected() {
        let line = r#"{"session_id":"s1","queries":[{"query_id":"q1","text":"a","timestamp":10,"candidates":[{"doc_id":"d1","text":"x","click":0},{"doc_id":"d1","text":"y","click":0}]}]}"#;
        let (_, errors) = parse_session_str(line);
        assert!(matches!(
            errors[0],
            SessionError::DuplicateDocIdInQuery { .. }
        ));
    }

    #[test]
    fn missing_field_named() {
        let line = r#"{"queries":[]}"#;
        let (_, errors) = parse_session_str(line);
        assert_eq!(
            errors,
            vec![SessionError::MissingField {
                line: 1,
                field: "session_id".into()
            }]
        );
    }

    #[test]
    fn empty_session_rejected() {
        let line = r#"{"session_id":"s1","queries":[]}"#;
        let (_, errors) = parse_session_str(line);
        assert_eq!(errors, vec![SessionError::EmptySession { line: 1 }]);
    }

    #[test]
    fn bad_lines_do_not_abort_the_stream() {
        let text = "not json\n{\"session_id\":\"s1\",\"queries\":[{\"query_id\":\"q1\",\"text\":\"a\",\"timestamp\":1,\"candidates\":[]}]}\n";
        let (sessions, errors) = parse_session_str(text);
        assert_eq!(sessions.len(), 1);
        assert_eq!(errors.len(), 1);
        assert!(matches!(
            errors[0],
            SessionError::InvalidJson { line: 1, .. }
        ));
    }

    #[test]
    fn context_at_step_one_has_empty_history() {
        let s = Session {
            session_id: "s".into(),
            queries: vec![query("q1", 1, vec![doc("d1", 1)])],
        };
        let ctx = make_context(&s, 1).unwrap();
        assert!(ctx.history.is_empty());
        assert_eq!(ctx.current_query.query_id, "q1");
    }

    #[test]
    fn context_step_out_of_range() {
        let s = Session {
            session_id: "s".into(),
            queries: vec![
                query("q1", 1, vec![doc("d1", 1), doc("d2", 0)]),
                query("q2", 2, vec![doc("d3", 0)]),
            ],
        };
        assert_eq!(
            make_context(&s, 3),
            Err(ContextError::StepOutOfRange { step: 3, len: 2 })
        );
        assert_eq!(
            make_context(&s, 0),
            Err(ContextError::StepOutOfRange { step: 0, len: 2 })
        );
    }

    #[test]
    fn context_history_keeps_only_clicks() {
        let s = Session {
            session_id: "s".into(),
            queries: vec![
                query("q1", 1, vec![doc("d1", 1), doc("d2", 1), doc("d3", 0)]),
                query("q2", 2, vec![]),
            ],
        };
        let ctx = make_context(&s, 2).unwrap();
        assert_eq!(ctx.history.len(), 1);
        let clicked: Vec<&str> = ctx.history[0].1.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(clicked, vec!["d1", "d2"]);
    }

    #[test]
    fn zero_click_step_still_appears_in_history() {
        let s = Session {
            session_id: "s".into(),
            queries: vec![query("q1", 1, vec![doc("d1", 0)]), query("q2", 2, vec![])],
        };
        let ctx = make_context(&s, 2).unwrap();
        assert_eq!(ctx.history.len(), 1);
        assert!(ctx.history[0].1.is_empty());
    }

    #[test]
    fn stats_means_match_hand_counts() {
        let s1 = Session {
            session_id: "a".into(),
            queries: vec![
                Query {
                    query_id: "q1".into(),
                    text: "a b".into(),
                    timestamp: 1,
                    candidates: (0..5).map(|i| doc(&format!("d{i}"), 0)).collect(),
                },
                query("q2", 2, vec![]),
            ],
        };
        let s2 = Session {
            session_id: "b".into(),
            queries: vec![
                Query {
                    query_id: "q3".into(),
                    text: "a b c d".into(),
                    timestamp: 1,
                    candidates: (0..3).map(|i| doc(&format!("e{i}"), 1)).collect(),
                },
                query("q4", 2, vec![]),
                query("q5", 3, vec![]),
            ],
        };
        let stats = compute_stats(&[s1, s2]).unwrap();
        assert_eq!(stats.session_count, 2);
        assert_eq!(stats.query_count, 5);
        assert!((stats.avg_queries_per_session - 2.5).abs() < 1e-12);
        // 8 candidates over 5 queries.
        assert!((stats.avg_docs_per_query - 1.6).abs() < 1e-12);
        // Spec example uses two queries: ("a b", "a b c d") -> 3.0.
        let two = compute_stats(&[Session {
            session_id: "c".into(),
            queries: vec![
                Query {
                    query_id: "x".into(),
                    text: "a b".into(),
                    timestamp: 1,
                    candidates: vec![],
                },
                Query {
                    query_id: "y".into(),
                    text: "a b c d".into(),
                    timestamp: 2,
                    candidates: vec![],
                },
            ],
        }])
        .unwrap();
        assert!((two.avg_query_len_tokens - 3.0).abs() < 1e-12);
        assert!((stats.avg_clicks_per_query - 0.6).abs() < 1e-12);
    }

    #[test]
    fn stats_docs_per_query_spec_example() {
        let s = Session {
            session_id: "s".into(),
            queries: vec![
                Query {
                    query_id: "q1".into(),
                    text: "t".into(),
                    timestamp: 1,
                    candidates: (0..5).map(|i| doc(&format!("a{i}"), 0)).collect(),
                },
                Query {
                    query_id: "q2".into(),
                    text: "t".into(),
                    timestamp: 2,
                    candidates: (0..3).map(|i| doc(&format!("b{i}"), 0)).collect(),
                },
            ],
        };
        let stats = compute_stats(&[s]).unwrap();
        assert!((stats.avg_docs_per_query - 4.0).abs() < 1e-12);
    }

    #[test]
    fn stats_empty_corpus_errors() {
        assert_eq!(compute_stats(&[]), Err(StatsError::EmptyCorpus));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        // Any unicode including control characters; serde_json escapes them.
        fn arb_text() -> impl Strategy<Value = String> {
            proptest::collection::vec(proptest::char::any(), 0..8)
                .prop_map(|cs| cs.into_iter().collect())
        }

        fn arb_session() -> impl Strategy<Value = Session> {
            (
                "[a-z]{1,8}",
                proptest::collection::vec(
                    (
                        arb_text(),
                        proptest::collection::vec((arb_text(), 0u8..=1), 0..4),
                    ),
                    1..5,
                ),
            )
                .prop_map(|(sid, qs)| {
                    let mut doc_no = 0usize;
                    let queries = qs
                        .into_iter()
                        .enumerate()
                        .map(|(j, (text, docs))| Query {
                            query_id: format!("q{j}"),
                            text,
                            timestamp: j as i64,
                            candidates: docs
                                .into_iter()
                                .map(|(dtext, click)| {
                                    doc_no += 1;
                                    Document {
                                        doc_id: format!("d{doc_no}"),
                                        text: dtext,
                                        click,
                                    }
                                })
                                .collect(),
                        })
                        .collect();
                    Session {
                        session_id: sid,
                        queries,
                    }
                })
        }

        proptest! {
            #[test]
            fn jsonl_round_trips_structurally(sessions in proptest::collection::vec(arb_session(), 1..5)) {
                let text = to_jsonl(&sessions);
                let (parsed, errors) = parse_session_str(&text);
                prop_assert!(errors.is_empty(), "{errors:?}");
                prop_assert_eq!(parsed, sessions);
            }

            #[test]
            fn context_history_length_is_step_minus_one(session in arb_session()) {
                for step in 1..=session.queries.len() {
                    let ctx = make_context(&session, step).unwrap();
                    prop_assert_eq!(ctx.history.len(), step - 1);
                    prop_assert_eq!(&ctx.current_query, &session.queries[step - 1]);
                }
            }

            #[test]
            fn stats_are_permutation_invariant(sessions in proptest::collection::vec(arb_session(), 1..6), seed in 0u64..1000) {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let base = compute_stats(&sessions).unwrap();
                let mut shuffled = sessions;
                shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
                let permuted = compute_stats(&shuffled).unwrap();
                prop_assert_eq!(base, permuted);
            }
        }
    }
}
