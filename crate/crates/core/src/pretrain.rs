//! Generators for the three self-supervised symbolic-learning datasets:
//! link prediction, node content generation, and generative contrastive
//! pairs. All generators are pure functions of (graph, config, seed); the
//! per-graph rng is derived from (seed, task, session, step) so parallelism
//! never changes the output.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grammar::{
    assemble_prompt, dangling_clause, serialize_edge, serialize_graph, serialize_node,
    truncate_graph_text, PromptTemplate, SymbolicText, TaskKind,
};
use crate::graph::{remove_edge, Edge, EdgeType, NodeRef, NodeType, SessionGraph};
use crate::util::derive_seed;

/// Literal that replaces a masked node's text. Brackets are not grammar
/// meta-characters, so the token survives escaping untouched.
pub const MASK_TOKEN: &str = "[MASK]";

fn is_false(b: &bool) -> bool {
    !*b
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub session_id: String,
    pub step: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node: Option<String>,
    pub rng_seed: u64,
    /// Set when the graph was too small to supply the requested negatives.
    #[serde(default, skip_serializing_if = "is_false")]
    pub insufficient_negatives: bool,
}

/// One training record. Exactly the fields demanded by the task are present:
/// link prediction carries a label, node generation a target, contrastive
/// both an alternative input and a target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainSample {
    pub task: TaskKind,
    pub input: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alt_input: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<u8>,
    pub meta: SampleMeta,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum PretrainError {
    #[error("graph has no click edges")]
    NoClickEdges,
}

#[derive(Debug, Clone)]
pub struct SamplerConfig {
    /// Negatives per positive for link prediction.
    pub neg_ratio: f64,
    /// Inclusion probability per eligible target (node generation and
    /// contrastive sampling).
    pub sample_rate: f64,
    pub seed: u64,
    /// Character budget for the serialized graph segment of each prompt.
    pub budget: Option<usize>,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            neg_ratio: 1.0,
            sample_rate: 1.0,
            seed: 0,
            budget: None,
        }
    }
}

pub struct Sampler {
    cfg: SamplerConfig,
    link_template: PromptTemplate,
    node_template: PromptTemplate,
    contrastive_template: PromptTemplate,
}

impl Sampler {
    pub fn new(cfg: SamplerConfig) -> Self {
        Self {
            cfg,
            link_template: PromptTemplate::default_for(TaskKind::LinkPred),
            node_template: PromptTemplate::default_for(TaskKind::NodeGen),
            contrastive_template: PromptTemplate::default_for(TaskKind::Contrastive),
        }
    }

    pub fn with_templates(
        cfg: SamplerConfig,
        link: PromptTemplate,
        node: PromptTemplate,
        contrastive: PromptTemplate,
    ) -> Self {
        Self {
            cfg,
            link_template: link,
            node_template: node,
            contrastive_template: contrastive,
        }
    }

    fn graph_text(&self, g: &SessionGraph) -> SymbolicText {
        match self.cfg.budget {
            Some(budget) => truncate_graph_text(g, budget),
            None => serialize_graph(g),
        }
    }

    /// Link prediction: one positive per edge, scored over the graph with
    /// that edge removed; `ceil(neg_ratio * |E|)` negatives drawn uniformly
    /// without replacement from type-valid non-edges, scored over the intact
    /// graph. If the graph cannot supply enough negatives, every emitted
    /// sample carries the `insufficient_negatives` flag.
    pub fn link_samples(
        &self,
        g: &SessionGraph,
        session_id: &str,
        step: usize,
    ) -> Vec<PretrainSample> {
        if g.edges.is_empty() {
            return Vec::new();
        }
        let seed = derive_seed(self.cfg.seed, &["link", session_id, &step.to_string()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let meta = |edge: &Edge, insufficient: bool| SampleMeta {
            session_id: session_id.to_string(),
            step,
            edge: Some(edge.ident()),
            node: None,
            rng_seed: seed,
            insufficient_negatives: insufficient,
        };

        let mut samples = Vec::new();
        for edge in &g.edges {
            let without = remove_edge(g, edge).expect("edge taken from the graph");
            let prompt = assemble_prompt(
                &self.link_template,
                &self.graph_text(&without),
                &serialize_edge(edge),
            )
            .expect("full clause for link prediction");
            samples.push(PretrainSample {
                task: TaskKind::LinkPred,
                input: prompt.text,
                alt_input: None,
                target: None,
                label: Some(1),
                meta: meta(edge, false),
            });
        }

        let candidates = negative_candidates(g);
        let wanted = (self.cfg.neg_ratio * g.edges.len() as f64).ceil() as usize;
        let take = wanted.min(candidates.len());
        let insufficient = take < wanted;
        let mut picked = rand::seq::index::sample(&mut rng, candidates.len(), take).into_vec();
        picked.sort_unstable();
        let full_text = self.graph_text(g);
        for idx in picked {
            let edge = &candidates[idx];
            let prompt = assemble_prompt(&self.link_template, &full_text, &serialize_edge(edge))
                .expect("full clause for link prediction");
            samples.push(PretrainSample {
                task: TaskKind::LinkPred,
                input: prompt.text,
                alt_input: None,
                target: None,
                label: Some(0),
                meta: meta(edge, insufficient),
            });
        }
        if insufficient {
            for s in &mut samples {
                s.meta.insufficient_negatives = true;
            }
        }
        samples
    }

    /// Node content generation: for each sampled node with at least one
    /// incident edge, mask its text everywhere (index retained), take the
    /// other endpoint of its latest incident edge as the clause source, and
    /// ask for the full serialized node back.
    pub fn node_samples(
        &self,
        g: &SessionGraph,
        session_id: &str,
        step: usize,
    ) -> Vec<PretrainSample> {
        if g.edges.is_empty() {
            return Vec::new();
        }
        let seed = derive_seed(self.cfg.seed, &["node", session_id, &step.to_string()]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut samples = Vec::new();
        for target in &g.nodes {
            let incident = g.incident_edges(target.key());
            // One rng draw per node, eligible or not, keeps streams stable.
            let roll: f64 = rng.gen();
            if incident.is_empty() || roll >= self.cfg.sample_rate {
                continue;
            }
            let latest = incident
                .iter()
                .max_by_key(|e| e.order_key)
                .expect("non-empty incident list");
            let (source_key, edge_type) = if latest.src.key() == target.key() {
                (latest.dst.key(), latest.edge_type)
            } else {
                (latest.src.key(), latest.edge_type)
            };
            let masked = mask_node_text(g, &target.text);
            // Pull the clause source from the masked graph so a source that
            // happens to share the target's text is masked in the clause too.
            let source = masked
                .node(source_key.0, source_key.1)
                .expect("endpoint still in graph")
                .clone();
            let prompt = assemble_prompt(
                &self.node_template,
                &self.graph_text(&masked),
                &dangling_clause(&source, edge_type),
            )
            .expect("dangling clause for node generation");
            samples.push(PretrainSample {
                task: TaskKind::NodeGen,
                input: prompt.text,
                alt_input: None,
                target: Some(serialize_node(target).text),
                label: None,
                meta: SampleMeta {
                    session_id: session_id.to_string(),
                    step,
                    edge: Some(latest.ident()),
                    node: Some(target.id()),
                    rng_seed: seed,
                    insufficient_negatives: false,
                },
            });
        }
        samples
    }

    /// Generative contrastive pairs over click edges: the with-history input
    /// serializes the graph minus the target edge; the without-history input
    /// is just instruction plus dangling clause.
    pub fn contrastive_samples(
        &self,
        g: &SessionGraph,
        session_id: &str,
        step: usize,
    ) -> Result<Vec<PretrainSample>, PretrainError> {
        let click_edges: Vec<&Edge> = g
            .edges
            .iter()
            .filter(|e| e.edge_type == EdgeType::ClickOn)
            .collect();
        if click_edges.is_empty() {
            return Err(PretrainError::NoClickEdges);
        }
        let seed = derive_seed(
            self.cfg.seed,
            &["contrastive", session_id, &step.to_string()],
        );
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let empty = SymbolicText {
            text: String::new(),
            provenance: crate::grammar::Provenance::Graph,
        };
        let mut samples = Vec::new();
        for edge in click_edges {
            let roll: f64 = rng.gen();
            if roll >= self.cfg.sample_rate {
                continue;
            }
            let without = remove_edge(g, edge).expect("edge taken from the graph");
            let clause = dangling_clause(&edge.src, EdgeType::ClickOn);
            let with_history = assemble_prompt(
                &self.contrastive_template,
                &self.graph_text(&without),
                &clause,
            )
            .expect("dangling clause for contrastive sampling");
            let history_free = assemble_prompt(&self.contrastive_template, &empty, &clause)
                .expect("dangling clause for contrastive sampling");
            samples.push(PretrainSample {
                task: TaskKind::Contrastive,
                input: with_history.text,
                alt_input: Some(history_free.text),
                target: Some(serialize_node(&edge.dst).text),
                label: None,
                meta: SampleMeta {
                    session_id: session_id.to_string(),
                    step,
                    edge: Some(edge.ident()),
                    node: Some(edge.dst.id()),
                    rng_seed: seed,
                    insufficient_negatives: false,
                },
            });
        }
        Ok(samples)
    }
}

/// All type-valid non-edges, in canonical order: query->document pairs with
/// no click edge, then non-adjacent query->query pairs, then cross-step
/// document->document pairs, each as (lower index -> higher index).
fn negative_candidates(g: &SessionGraph) -> Vec<Edge> {
    let queries: Vec<&NodeRef> = sorted_nodes(g, NodeType::Query);
    let documents: Vec<&NodeRef> = sorted_nodes(g, NodeType::Document);
    let has_edge = |src: &NodeRef, dst: &NodeRef, et: EdgeType| {
        g.edges
            .iter()
            .any(|e| e.edge_type == et && e.src.key() == src.key() && e.dst.key() == dst.key())
    };
    let mut out = Vec::new();
    let mut push = |src: &NodeRef, dst: &NodeRef, et: EdgeType| {
        out.push(Edge {
            src: src.clone(),
            dst: dst.clone(),
            edge_type: et,
            order_key: 0,
        });
    };
    for q in &queries {
        for d in &documents {
            if !has_edge(q, d, EdgeType::ClickOn) {
                push(q, d, EdgeType::ClickOn);
            }
        }
    }
    for a in 0..queries.len() {
        for b in (a + 1)..queries.len() {
            if !has_edge(queries[a], queries[b], EdgeType::TransferTo) {
                push(queries[a], queries[b], EdgeType::TransferTo);
            }
        }
    }
    for a in 0..documents.len() {
        for b in (a + 1)..documents.len() {
            if !has_edge(documents[a], documents[b], EdgeType::TransferTo) {
                push(documents[a], documents[b], EdgeType::TransferTo);
            }
        }
    }
    out
}

fn sorted_nodes(g: &SessionGraph, node_type: NodeType) -> Vec<&NodeRef> {
    let mut nodes: Vec<&NodeRef> = g
        .nodes
        .iter()
        .filter(|n| n.node_type == node_type)
        .collect();
    nodes.sort_by_key(|n| n.index);
    nodes
}

/// Copy of `g` with the text of every node equal to `text` replaced by
/// [`MASK_TOKEN`], in the node list and inside every edge endpoint. Indices
/// are retained.
fn mask_node_text(g: &SessionGraph, text: &str) -> SessionGraph {
    let mut out = g.clone();
    let mask = |n: &mut NodeRef| {
        if n.text == text {
            n.text = MASK_TOKEN.to_string();
        }
    };
    for n in &mut out.nodes {
        mask(n);
    }
    for e in &mut out.edges {
        mask(&mut e.src);
        mask(&mut e.dst);
    }
    out
}
