//! trec_eval-compatible evaluation: MAP, MRR, NDCG@k over run + qrels text.
//!
//! Semantics pinned to trec_eval: runs are re-sorted by (score desc, doc_id
//! desc) ignoring the rank column, unjudged documents count as grade 0,
//! NDCG uses the linear-gain `ndcg_cut` form, and macro averages are taken
//! over the qrels queries that appear in the run.

use std::collections::{BTreeMap, HashSet};

use serde::Serialize;
use thiserror::Error;

/// Relevance judgments: query key -> doc_id -> grade (binary in this corpus,
/// but any non-negative integer grade is accepted).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    rows: BTreeMap<String, BTreeMap<String, u32>>,
}

impl Qrels {
    pub fn row(&self, qkey: &str) -> Option<&BTreeMap<String, u32>> {
        self.rows.get(qkey)
    }

    pub fn contains(&self, qkey: &str) -> bool {
        self.rows.contains_key(qkey)
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// One parsed run entry; the rank column is read but never trusted.
#[derive(Debug, Clone, PartialEq)]
pub struct RunEntry {
    pub doc_id: String,
    pub rank: usize,
    pub score: f64,
}

/// A parsed run file: per-query entries in file order of first appearance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Run {
    pub queries: Vec<(String, Vec<RunEntry>)>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum EvalError {
    #[error("run line {line}: {reason}")]
    MalformedRunLine { line: usize, reason: String },
    #[error("qrels line {line}: {reason}")]
    MalformedQrelsLine { line: usize, reason: String },
}

/// Parse qrels text: `{qkey} 0 {doc_id} {grade}` per line. A repeated
/// (query, doc) pair is an error.
pub fn parse_qrels(text: &str) -> Result<Qrels, EvalError> {
    let mut rows: BTreeMap<String, BTreeMap<String, u32>> = BTreeMap::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(EvalError::MalformedQrelsLine {
                line: line_no,
                reason: format!("expected 4 fields, found {}", fields.len()),
            });
        }
        let grade: u32 = fields[3]
            .parse()
            .map_err(|_| EvalError::MalformedQrelsLine {
                line: line_no,
                reason: format!("grade `{}` is not a non-negative integer", fields[3]),
            })?;
        let row = rows.entry(fields[0].to_string()).or_default();
        if row.insert(fields[2].to_string(), grade).is_some() {
            return Err(EvalError::MalformedQrelsLine {
                line: line_no,
                reason: format!("duplicate judgment for doc `{}`", fields[2]),
            });
        }
    }
    Ok(Qrels { rows })
}

/// Parse run text: `{qkey} Q0 {doc_id} {rank} {score} {tag}` per line.
/// A document retrieved twice for the same query is an error.
pub fn parse_run(text: &str) -> Result<Run, EvalError> {
    let mut order: Vec<String> = Vec::new();
    let mut by_query: BTreeMap<String, Vec<RunEntry>> = BTreeMap::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();
    for (no, line) in text.lines().enumerate() {
        let line_no = no + 1;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 6 {
            return Err(EvalError::MalformedRunLine {
                line: line_no,
                reason: format!("expected 6 fields, found {}", fields.len()),
            });
        }
        let rank: usize = fields[3].parse().map_err(|_| EvalError::MalformedRunLine {
            line: line_no,
            reason: format!("rank `{}` is not an integer", fields[3]),
        })?;
        let score: f64 = fields[4].parse().map_err(|_| EvalError::MalformedRunLine {
            line: line_no,
            reason: format!("score `{}` is not a number", fields[4]),
        })?;
        let qkey = fields[0].to_string();
        let doc_id = fields[2].to_string();
        if !seen.insert((qkey.clone(), doc_id.clone())) {
            return Err(EvalError::MalformedRunLine {
                line: line_no,
                reason: format!("doc `{doc_id}` retrieved twice for query `{qkey}`"),
            });
        }
        if !by_query.contains_key(&qkey) {
            order.push(qkey.clone());
        }
        by_query.entry(qkey).or_default().push(RunEntry {
            doc_id,
            rank,
            score,
        });
    }
    Ok(Run {
        queries: order
            .into_iter()
            .map(|q| {
                let entries = by_query.remove(&q).unwrap_or_default();
                (q, entries)
            })
            .collect(),
    })
}

/// Average precision: `(1/R) * sum of precision@rank over relevant retrieved
/// docs`, with `R` the total number of relevant docs in the qrels row,
/// retrieved or not. Zero when `R` is zero.
pub fn average_precision(ranked: &[&str], rels: &BTreeMap<String, u32>) -> f64 {
    let total_relevant = rels.values().filter(|&&g| g > 0).count();
    if total_relevant == 0 {
        return 0.0;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, doc) in ranked.iter().enumerate() {
        if rels.get(*doc).copied().unwrap_or(0) > 0 {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    sum / total_relevant as f64
}

/// Reciprocal rank of the first relevant document; zero when none retrieved.
pub fn reciprocal_rank(ranked: &[&str], rels: &BTreeMap<String, u32>) -> f64 {
    for (i, doc) in ranked.iter().enumerate() {
        if rels.get(*doc).copied().unwrap_or(0) > 0 {
            return 1.0 / (i + 1) as f64;
        }
    }
    0.0
}

/// NDCG@k with linear gains: `DCG = sum grade_i / log2(i+1)` over the run
/// order, ideal DCG over qrels grades sorted descending. Zero when the ideal
/// is zero.
pub fn ndcg_at_k(ranked: &[&str], rels: &BTreeMap<String, u32>, k: usize) -> f64 {
    let discount = |i: usize| ((i + 2) as f64).log2();
    let dcg: f64 = ranked
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, doc)| f64::from(rels.get(*doc).copied().unwrap_or(0)) / discount(i))
        .sum();
    let mut grades: Vec<u32> = rels.values().copied().collect();
    grades.sort_unstable_by(|a, b| b.cmp(a));
    let idcg: f64 = grades
        .iter()
        .take(k)
        .enumerate()
        .map(|(i, &g)| f64::from(g) / discount(i))
        .sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Metrics for one query or for the macro average.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QueryMetrics {
    pub map: f64,
    pub mrr: f64,
    pub ndcg: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerQueryMetrics {
    pub query: String,
    #[serde(flatten)]
    pub metrics: QueryMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricReport {
    pub num_queries: usize,
    pub ks: Vec<usize>,
    pub mean: QueryMetrics,
    pub per_query: Vec<PerQueryMetrics>,
    pub warnings: Vec<String>,
}

impl MetricReport {
    /// Aligned text table; per-query rows optional.
    pub fn to_table(&self, per_query: bool) -> String {
        let mut out = String::new();
        let metric_names: Vec<String> = std::iter::once("map".to_string())
            .chain(std::iter::once("mrr".to_string()))
            .chain(self.ks.iter().map(|k| format!("ndcg@{k}")))
            .collect();
        out.push_str(&format!("{:<24}", "query"));
        for name in &metric_names {
            out.push_str(&format!("{name:>12}"));
        }
        out.push('\n');
        let row = |label: &str, m: &QueryMetrics| {
            let mut line = format!("{label:<24}");
            line.push_str(&format!("{:>12.4}", m.map));
            line.push_str(&format!("{:>12.4}", m.mrr));
            for k in &self.ks {
                line.push_str(&format!("{:>12.4}", m.ndcg.get(k).copied().unwrap_or(0.0)));
            }
            line.push('\n');
            line
        };
        if per_query {
            for pq in &self.per_query {
                out.push_str(&row(&pq.query, &pq.metrics));
            }
        }
        out.push_str(&row("all", &self.mean));
        out
    }
}

/// Evaluate a run against qrels. Run queries missing from the qrels are
/// skipped with a warning; macro averages are over the evaluated queries.
pub fn evaluate(run_text: &str, qrels_text: &str, ks: &[usize]) -> Result<MetricReport, EvalError> {
    let run = parse_run(run_text)?;
    let qrels = parse_qrels(qrels_text)?;
    let mut warnings = Vec::new();
    let mut per_query = Vec::new();
    for (qkey, entries) in &run.queries {
        let Some(rels) = qrels.row(qkey) else {
            warnings.push(format!("run query `{qkey}` has no qrels entry; skipped"));
            continue;
        };
        // trec_eval ignores the file's rank column and re-sorts.
        let mut sorted = entries.clone();
        sorted.sort_by(|a, b| {
            b.score
                .total_cmp(&a.score)
                .then_with(|| b.doc_id.cmp(&a.doc_id))
        });
        let ranked: Vec<&str> = sorted.iter().map(|e| e.doc_id.as_str()).collect();
        let metrics = QueryMetrics {
            map: average_precision(&ranked, rels),
            mrr: reciprocal_rank(&ranked, rels),
            ndcg: ks
                .iter()
                .map(|&k| (k, ndcg_at_k(&ranked, rels, k)))
                .collect(),
        };
        per_query.push(PerQueryMetrics {
            query: qkey.clone(),
            metrics,
        });
    }
    let n = per_query.len();
    let mean_of = |f: &dyn Fn(&QueryMetrics) -> f64| {
        if n == 0 {
            0.0
        } else {
            per_query.iter().map(|pq| f(&pq.metrics)).sum::<f64>() / n as f64
        }
    };
    let mean = QueryMetrics {
        map: mean_of(&|m| m.map),
        mrr: mean_of(&|m| m.mrr),
        ndcg: ks
            .iter()
            .map(|&k| (k, mean_of(&|m| m.ndcg.get(&k).copied().unwrap_or(0.0))))
            .collect(),
    };
    Ok(MetricReport {
        num_queries: n,
        ks: ks.to_vec(),
        mean,
        per_query,
        warnings,
    })
}
