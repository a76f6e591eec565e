//! Listwise document ranking: assemble one prompt per candidate, score, sort,
//! and emit TREC-format run files (plus click-label qrels).

use std::collections::{HashMap, HashSet};

use thiserror::Error;

use crate::grammar::{
    assemble_prompt, serialize_edge, serialize_graph, truncate_graph_text, PromptTemplate, TaskKind,
};
use crate::graph::{build_graph, Edge, EdgeType, NodeRef, NodeType};
use crate::scorer::{Scorer, ScorerError};
use crate::session::{Session, SessionContext};
use crate::util::parallel_map;

/// One ranked document.
#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub doc_id: String,
    pub score: f64,
    /// 1-based, contiguous.
    pub rank: usize,
}

/// Ranking for one (session, step) query, sorted by score descending with
/// ties broken by doc_id descending so our metrics and trec_eval agree.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    pub key: String,
    pub entries: Vec<RankEntry>,
}

/// What to do when the scorer fails on one candidate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum)]
pub enum FailPolicy {
    /// Fail the whole query so run files stay complete.
    #[default]
    FailQuery,
    /// Drop the candidate and rank the rest.
    SkipCandidate,
}

#[derive(Debug, Error)]
pub enum RankError {
    #[error("query has no candidates")]
    NoCandidates,
    #[error("scorer failed on doc `{doc_id}`: {source}")]
    Scorer {
        doc_id: String,
        #[source]
        source: ScorerError,
    },
    #[error("duplicate query key `{0}` in run")]
    DuplicateQueryKey(String),
}

#[derive(Debug, Clone)]
pub struct RankOptions {
    /// Character budget for the serialized graph segment.
    pub budget: Option<usize>,
    pub policy: FailPolicy,
    pub template: PromptTemplate,
    /// Concurrent candidate scoring within one query. Assembly and sorting
    /// stay deterministic regardless.
    pub jobs: usize,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            budget: None,
            policy: FailPolicy::default(),
            template: PromptTemplate::default_for(TaskKind::Rank),
            jobs: 1,
        }
    }
}

/// Flat key for one ranked list: `{session_id}.{step}`.
pub fn query_key(session_id: &str, step: usize) -> String {
    format!("{session_id}.{step}")
}

/// Build the ranking prompt for each candidate of the current query and
/// return the list sorted per [`RankedList`] rules. Scores are `prob_yes`.
pub fn rank_candidates(
    ctx: &SessionContext,
    scorer: &dyn Scorer,
    opts: &RankOptions,
) -> Result<RankedList, RankError> {
    if ctx.current_query.candidates.is_empty() {
        return Err(RankError::NoCandidates);
    }
    let graph = build_graph(ctx);
    let g_text = match opts.budget {
        Some(budget) => truncate_graph_text(&graph, budget),
        None => serialize_graph(&graph),
    };
    let step = ctx.history.len() + 1;
    let query_node = graph
        .node(NodeType::Query, step)
        .expect("current query is a node")
        .clone();

    // A candidate already clicked in history reuses its node index; unseen
    // candidates get ephemeral indices continuing the document counter.
    let doc_indices: HashMap<&str, usize> = graph
        .nodes
        .iter()
        .filter(|n| n.node_type == NodeType::Document)
        .map(|n| (n.source_id.as_str(), n.index))
        .collect();
    let mut next_index = doc_indices.values().copied().max().unwrap_or(0);

    let mut prompts: Vec<(String, String)> = Vec::with_capacity(ctx.current_query.candidates.len());
    for cand in &ctx.current_query.candidates {
        let index = match doc_indices.get(cand.doc_id.as_str()) {
            Some(&i) => i,
            None => {
                next_index += 1;
                next_index
            }
        };
        let node = NodeRef::new(NodeType::Document, index, &cand.text, &cand.doc_id);
        let clause = serialize_edge(&Edge {
            src: query_node.clone(),
            dst: node,
            edge_type: EdgeType::ClickOn,
            order_key: 0,
        });
        let prompt = assemble_prompt(&opts.template, &g_text, &clause)
            .expect("rank clause is always a full edge");
        prompts.push((cand.doc_id.clone(), prompt.text));
    }

    let scored: Vec<(String, Result<f64, ScorerError>)> =
        parallel_map(prompts, opts.jobs, |(doc_id, prompt)| {
            let result = scorer.score_answer(&prompt).map(|a| a.prob_yes);
            (doc_id, result)
        });

    let mut entries: Vec<RankEntry> = Vec::with_capacity(scored.len());
    for (doc_id, result) in scored {
        match result {
            Ok(score) => entries.push(RankEntry {
                doc_id,
                score,
                rank: 0,
            }),
            Err(source) => match opts.policy {
                FailPolicy::FailQuery => return Err(RankError::Scorer { doc_id, source }),
                FailPolicy::SkipCandidate => continue,
            },
        }
    }
    if entries.is_empty() {
        return Err(RankError::NoCandidates);
    }
    entries.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then_with(|| b.doc_id.cmp(&a.doc_id))
    });
    for (i, e) in entries.iter_mut().enumerate() {
        e.rank = i + 1;
    }
    Ok(RankedList {
        key: query_key(&ctx.session_id, ctx.step),
        entries,
    })
}

/// Emit TREC run lines: `{qkey} Q0 {doc_id} {rank} {score:.6} {tag}`,
/// queries in input order.
pub fn emit_run_file(lists: &[RankedList], tag: &str) -> Result<String, RankError> {
    let mut seen: HashSet<&str> = HashSet::new();
    let mut out = String::new();
    for list in lists {
        if !seen.insert(&list.key) {
            return Err(RankError::DuplicateQueryKey(list.key.clone()));
        }
        for e in &list.entries {
            out.push_str(&format!(
                "{} Q0 {} {} {:.6} {}\n",
                list.key, e.doc_id, e.rank, e.score, tag
            ));
        }
    }
    Ok(out)
}

/// Emit click-label qrels (`{qkey} 0 {doc_id} {0|1}`) for every ranked step.
pub fn emit_qrels(sessions: &[Session], last_step_only: bool) -> String {
    let mut out = String::new();
    for s in sessions {
        let steps: Vec<usize> = if last_step_only {
            vec![s.queries.len()]
        } else {
            (1..=s.queries.len()).collect()
        };
        for step in steps {
            let key = query_key(&s.session_id, step);
            for d in &s.queries[step - 1].candidates {
                out.push_str(&format!("{key} 0 {} {}\n", d.doc_id, d.click));
            }
        }
    }
    out
}

/// Session-length buckets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bucket {
    Short,
    Medium,
    Long,
}

/// Short: length <= 2; medium: 3 or 4; long: 5 and beyond.
pub fn bucket_for(length: usize) -> Bucket {
    match length {
        0..=2 => Bucket::Short,
        3..=4 => Bucket::Medium,
        _ => Bucket::Long,
    }
}

/// Partition sessions by query count. Returns per-session assignments in
/// input order plus (short, medium, long) counts.
pub fn bucket_sessions(sessions: &[Session]) -> (Vec<(String, usize, Bucket)>, [usize; 3]) {
    let mut assignments = Vec::with_capacity(sessions.len());
    let mut counts = [0usize; 3];
    for s in sessions {
        let len = s.queries.len();
        let bucket = bucket_for(len);
        counts[match bucket {
            Bucket::Short => 0,
            Bucket::Medium => 1,
            Bucket::Long => 2,
        }] += 1;
        assignments.push((s.session_id.clone(), len, bucket));
    }
    (assignments, counts)
}
