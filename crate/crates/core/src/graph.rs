//! Heterogeneous session graph construction.
//!
//! Nodes are queries and clicked documents; edges are `click on`
//! (query -> clicked document) and `transfer to` (adjacent queries, and the
//! clique over documents clicked under the same query). Unclicked candidates
//! of the current query never become nodes; they only appear in the trailing
//! ranking clause.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::session::SessionContext;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Query,
    Document,
}

impl NodeType {
    /// One-letter prefix used by the symbolic grammar: `q` or `d`.
    pub fn prefix(self) -> char {
        match self {
            NodeType::Query => 'q',
            NodeType::Document => 'd',
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeType {
    ClickOn,
    TransferTo,
}

impl fmt::Display for EdgeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EdgeType::ClickOn => "click on",
            EdgeType::TransferTo => "transfer to",
        })
    }
}

/// A typed, session-indexed node. Queries and documents carry separate
/// 1-based counters, so `(node_type, index)` identifies a node within one
/// graph.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub node_type: NodeType,
    pub index: usize,
    pub text: String,
    /// Originating query_id or doc_id. Empty for graphs recovered from text.
    pub source_id: String,
}

impl NodeRef {
    /// Construct a node, normalizing newlines to single spaces so the
    /// symbolic serialization round-trips exactly.
    pub fn new(node_type: NodeType, index: usize, text: &str, source_id: &str) -> Self {
        let text = text.replace(['\n', '\r'], " ");
        Self {
            node_type,
            index,
            text,
            source_id: source_id.to_string(),
        }
    }

    /// Identity within one graph.
    pub fn key(&self) -> (NodeType, usize) {
        (self.node_type, self.index)
    }

    /// Grammar identifier such as `q3` or `d5`.
    pub fn id(&self) -> String {
        format!("{}{}", self.node_type.prefix(), self.index)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub src: NodeRef,
    pub dst: NodeRef,
    pub edge_type: EdgeType,
    /// Position in chronological emission order; a permutation of `0..|E|-1`.
    pub order_key: usize,
}

impl Edge {
    /// Short identifier like `q1 <click on> d2`, used in sample metadata.
    pub fn ident(&self) -> String {
        format!("{} <{}> {}", self.src.id(), self.edge_type, self.dst.id())
    }
}

/// Edge identity within one graph: endpoint keys plus edge type.
pub(crate) type EdgeKey = ((NodeType, usize), (NodeType, usize), EdgeType);

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionGraph {
    pub nodes: Vec<NodeRef>,
    /// Sorted by `order_key`.
    pub edges: Vec<Edge>,
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GraphError {
    #[error("edge {0} not found in graph")]
    EdgeNotFound(String),
}

impl SessionGraph {
    pub fn node(&self, node_type: NodeType, index: usize) -> Option<&NodeRef> {
        self.nodes
            .iter()
            .find(|n| n.node_type == node_type && n.index == index)
    }

    /// Edges incident to a node, in order-key order.
    pub fn incident_edges(&self, key: (NodeType, usize)) -> Vec<&Edge> {
        self.edges
            .iter()
            .filter(|e| e.src.key() == key || e.dst.key() == key)
            .collect()
    }

    /// Structural equality on the edge sequence: endpoint type/index/text and
    /// edge type, in order. The grammar stores node content only inside edge
    /// clauses, so isolated nodes are invisible to it and are ignored here;
    /// order keys and source ids are likewise not compared.
    pub fn structurally_equal(&self, other: &SessionGraph) -> bool {
        self.edges.len() == other.edges.len()
            && self.edges.iter().zip(&other.edges).all(|(a, b)| {
                a.edge_type == b.edge_type
                    && a.src.key() == b.src.key()
                    && a.src.text == b.src.text
                    && a.dst.key() == b.dst.key()
                    && a.dst.text == b.dst.text
            })
    }

    /// GraphViz rendering for inspection.
    pub fn to_dot(&self) -> String {
        fn quote(s: &str) -> String {
            s.replace('\\', "\\\\").replace('"', "\\\"")
        }
        let mut out = String::from("digraph session {\n");
        for n in &self.nodes {
            let shape = match n.node_type {
                NodeType::Query => "ellipse",
                NodeType::Document => "box",
            };
            out.push_str(&format!(
                "  {} [label=\"{}: {}\" shape={}];\n",
                n.id(),
                n.id(),
                quote(&n.text),
                shape
            ));
        }
        for e in &self.edges {
            out.push_str(&format!(
                "  {} -> {} [label=\"{}\"];\n",
                e.src.id(),
                e.dst.id(),
                e.edge_type
            ));
        }
        out.push_str("}\n");
        out
    }
}

/// Build the session graph for a step-`i` context.
///
/// Nodes: queries `q_1..q_i` indexed by position, plus clicked documents of
/// steps `1..i-1` deduplicated by doc_id and indexed by first appearance.
/// Per history step `j`, emission order is: click edges in candidate order,
/// then the document clique once per unordered pair as (low index -> high
/// index) in lexicographic order, then the transition `q_j -> q_{j+1}`.
pub fn build_graph(ctx: &SessionContext) -> SessionGraph {
    let step = ctx.history.len() + 1;
    let mut nodes: Vec<NodeRef> = Vec::new();
    let mut query_nodes: Vec<NodeRef> = Vec::with_capacity(step);
    for (j, (q, _)) in ctx.history.iter().enumerate() {
        query_nodes.push(NodeRef::new(NodeType::Query, j + 1, &q.text, &q.query_id));
    }
    query_nodes.push(NodeRef::new(
        NodeType::Query,
        step,
        &ctx.current_query.text,
        &ctx.current_query.query_id,
    ));
    nodes.extend(query_nodes.iter().cloned());

    let mut doc_index: HashMap<String, usize> = HashMap::new();
    let mut doc_nodes: HashMap<usize, NodeRef> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut seen: HashSet<EdgeKey> = HashSet::new();

    let mut push_edge = |edges: &mut Vec<Edge>, src: &NodeRef, dst: &NodeRef, et: EdgeType| {
        if seen.insert((src.key(), dst.key(), et)) {
            edges.push(Edge {
                src: src.clone(),
                dst: dst.clone(),
                edge_type: et,
                order_key: edges.len(),
            });
        }
    };

    for (j, (_, clicked)) in ctx.history.iter().enumerate() {
        let q_node = &query_nodes[j];
        let mut step_doc_indices: Vec<usize> = Vec::with_capacity(clicked.len());
        for d in clicked {
            let next = doc_index.len() + 1;
            let idx = *doc_index.entry(d.doc_id.clone()).or_insert(next);
            let node = doc_nodes
                .entry(idx)
                .or_insert_with(|| NodeRef::new(NodeType::Document, idx, &d.text, &d.doc_id))
                .clone();
            if nodes.iter().all(|n| n.key() != node.key()) {
                nodes.push(node.clone());
            }
            push_edge(&mut edges, q_node, &node, EdgeType::ClickOn);
            step_doc_indices.push(idx);
        }
        step_doc_indices.sort_unstable();
        step_doc_indices.dedup();
        for a in 0..step_doc_indices.len() {
            for b in (a + 1)..step_doc_indices.len() {
                let lo = doc_nodes[&step_doc_indices[a]].clone();
                let hi = doc_nodes[&step_doc_indices[b]].clone();
                push_edge(&mut edges, &lo, &hi, EdgeType::TransferTo);
            }
        }
        push_edge(
            &mut edges,
            q_node,
            &query_nodes[j + 1],
            EdgeType::TransferTo,
        );
    }

    SessionGraph { nodes, edges }
}

/// Copy of `g` with one edge removed and order keys re-compacted. The edge is
/// matched by endpoints and type; nodes are untouched, so isolated nodes may
/// remain.
pub fn remove_edge(g: &SessionGraph, edge: &Edge) -> Result<SessionGraph, GraphError> {
    let pos = g
        .edges
        .iter()
        .position(|e| {
            e.src.key() == edge.src.key()
                && e.dst.key() == edge.dst.key()
                && e.edge_type == edge.edge_type
        })
        .ok_or_else(|| GraphError::EdgeNotFound(edge.ident()))?;
    let mut out = g.clone();
    out.edges.remove(pos);
    for (k, e) in out.edges.iter_mut().enumerate() {
        e.order_key = k;
    }
    Ok(out)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::session::{make_context, Document, Query, Session};

    pub(crate) fn session_with_clicks(counts: &[usize]) -> Session {
        // Step j gets counts[j-1] clicked docs plus one unclicked candidate.
        let mut doc_no = 0;
        let queries = counts
            .iter()
            .enumerate()
            .map(|(j, &c)| {
                let mut candidates: Vec<Document> = (0..c)
                    .map(|_| {
                        doc_no += 1;
                        Document {
                            doc_id: format!("d{doc_no}"),
                            text: format!("doc {doc_no}"),
                            click: 1,
                        }
                    })
                    .collect();
                doc_no += 1;
                candidates.push(Document {
                    doc_id: format!("d{doc_no}"),
                    text: format!("doc {doc_no}"),
                    click: 0,
                });
                Query {
                    query_id: format!("q{}", j + 1),
                    text: format!("query {}", j + 1),
                    timestamp: j as i64,
                    candidates,
                }
            })
            .collect();
        Session {
            session_id: "s".into(),
            queries,
        }
    }

    /// The [2,1,0] fixture: 3 queries with history click counts [2,1],
    /// ranked at step 3.
    pub(crate) fn fixture_210() -> SessionGraph {
        let s = session_with_clicks(&[2, 1, 0]);
        build_graph(&make_context(&s, 3).unwrap())
    }

    #[test]
    fn fixture_matches_closed_form_count() {
        let g = fixture_210();
        // (i-1) + sum(c) + sum(c(c-1)/2) = 2 + 3 + 1 = 6
        assert_eq!(g.edges.len(), 6);
        let clicks = g
            .edges
            .iter()
            .filter(|e| e.edge_type == EdgeType::ClickOn)
            .count();
        assert_eq!(clicks, 3);
        let transfers = g.edges.len() - clicks;
        assert_eq!(transfers, 3); // 2 query transitions + 1 doc pair
    }

    #[test]
    fn fixture_emission_order_is_chronological() {
        let g = fixture_210();
        let ids: Vec<String> = g.edges.iter().map(|e| e.ident()).collect();
        assert_eq!(
            ids,
            vec![
                "q1 <click on> d1",
                "q1 <click on> d2",
                "d1 <transfer to> d2",
                "q1 <transfer to> q2",
                "q2 <click on> d3",
                "q2 <transfer to> q3",
            ]
        );
        let keys: Vec<usize> = g.edges.iter().map(|e| e.order_key).collect();
        assert_eq!(keys, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn single_query_yields_single_node_no_edges() {
        let s = session_with_clicks(&[0]);
        let g = build_graph(&make_context(&s, 1).unwrap());
        assert_eq!(g.nodes.len(), 1);
        assert!(g.edges.is_empty());
    }

    #[test]
    fn repeated_doc_id_becomes_one_node() {
        let shared = Document {
            doc_id: "shared".into(),
            text: "same page".into(),
            click: 1,
        };
        let s = Session {
            session_id: "s".into(),
            queries: vec![
                Query {
                    query_id: "q1".into(),
                    text: "a".into(),
                    timestamp: 1,
                    candidates: vec![shared.clone()],
                },
                Query {
                    query_id: "q2".into(),
                    text: "b".into(),
                    timestamp: 2,
                    candidates: vec![shared],
                },
                Query {
                    query_id: "q3".into(),
                    text: "c".into(),
                    timestamp: 3,
                    candidates: vec![],
                },
            ],
        };
        let g = build_graph(&make_context(&s, 3).unwrap());
        let docs: Vec<&NodeRef> = g
            .nodes
            .iter()
            .filter(|n| n.node_type == NodeType::Document)
            .collect();
        assert_eq!(docs.len(), 1);
        let incident = g.incident_edges((NodeType::Document, 1));
        let clicks = incident
            .iter()
            .filter(|e| e.edge_type == EdgeType::ClickOn)
            .count();
        assert_eq!(clicks, 2);
    }

    #[test]
    fn unclicked_candidates_are_not_nodes() {
        let g = fixture_210();
        // 3 queries + 3 clicked docs; the unclicked candidates never appear.
        assert_eq!(g.nodes.len(), 6);
        for e in &g.edges {
            assert!(e.edge_type != EdgeType::ClickOn || e.dst.node_type == NodeType::Document);
        }
    }

    #[test]
    fn remove_edge_compacts_order_keys() {
        let g = fixture_210();
        let target = g.edges[2].clone(); // the doc-doc transfer
        let g2 = remove_edge(&g, &target).unwrap();
        assert_eq!(g2.edges.len(), 5);
        assert_eq!(g2.nodes.len(), g.nodes.len());
        let keys: Vec<usize> = g2.edges.iter().map(|e| e.order_key).collect();
        assert_eq!(keys, vec![0, 1, 2, 3, 4]);
        assert!(g2.edges.iter().all(|e| e.ident() != target.ident()));
    }

    #[test]
    fn remove_click_edge_keeps_doc_clique() {
        let g = fixture_210();
        let click = g.edges[0].clone();
        let g2 = remove_edge(&g, &click).unwrap();
        assert!(g2.edges.iter().any(|e| e.ident() == "d1 <transfer to> d2"));
    }

    #[test]
    fn remove_missing_edge_errors() {
        let g = fixture_210();
        let mut fake = g.edges[0].clone();
        fake.src.index = 99;
        assert!(matches!(
            remove_edge(&g, &fake),
            Err(GraphError::EdgeNotFound(_))
        ));
    }

    #[test]
    fn remove_only_edge_leaves_isolated_nodes() {
        let s = session_with_clicks(&[0, 0]);
        let g = build_graph(&make_context(&s, 2).unwrap());
        assert_eq!(g.edges.len(), 1);
        let g2 = remove_edge(&g, &g.edges[0].clone()).unwrap();
        assert_eq!(g2.nodes.len(), 2);
        assert!(g2.edges.is_empty());
    }

    #[test]
    fn node_text_newlines_normalized() {
        let n = NodeRef::new(NodeType::Query, 1, "line1\nline2\r\nline3", "q1");
        assert_eq!(n.text, "line1 line2  line3");
    }

    #[test]
    fn repeated_builds_are_identical() {
        let s = session_with_clicks(&[3, 0, 2, 1]);
        let ctx = make_context(&s, 4).unwrap();
        let a = build_graph(&ctx);
        let b = build_graph(&ctx);
        assert_eq!(a, b);
        let a_idx: Vec<(String, usize)> = a
            .nodes
            .iter()
            .map(|n| (n.source_id.clone(), n.index))
            .collect();
        let b_idx: Vec<(String, usize)> = b
            .nodes
            .iter()
            .map(|n| (n.source_id.clone(), n.index))
            .collect();
        assert_eq!(a_idx, b_idx);
    }

    #[test]
    fn dot_output_mentions_every_node_and_edge() {
        let g = fixture_210();
        let dot = g.to_dot();
        assert!(dot.starts_with("digraph"));
        for n in &g.nodes {
            assert!(dot.contains(&n.id()));
        }
        assert_eq!(dot.matches("->").count(), g.edges.len());
    }
}
