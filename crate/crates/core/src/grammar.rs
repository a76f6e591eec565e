//! The symbolic text grammar: bidirectional translation between session
//! graphs and text, plus prompt assembly.
//!
//! A node renders as `(q3, MacBook Price?)`, an edge as
//! `(q3, MacBook Price?) <click on> (d5, $1,999)`, and a graph as its edge
//! clauses joined by `" ; "` in chronological order. Within node text the
//! characters `\ ( ) < > ;` are backslash-escaped so arbitrary document text
//! round-trips; newlines are normalized to spaces at node construction.

use std::collections::HashMap;
use std::fmt;

use thiserror::Error;

use crate::graph::{Edge, EdgeType, NodeRef, NodeType, SessionGraph};

/// Separator between edge clauses in a serialized graph.
pub const EDGE_SEPARATOR: &str = " ; ";

/// Characters that carry grammar meaning and are escaped inside node text.
pub const META_CHARS: [char; 6] = ['\\', '(', ')', '<', '>', ';'];

/// Default instruction strings. The grammar requires an instruction per task
/// but the wording is configurable; these are the shipped defaults.
pub const LINK_INSTRUCTION: &str =
    "Given the search session graph, answer yes or no: does an edge of this type connect these two nodes?";
pub const NODE_INSTRUCTION: &str =
    "Given the search session graph with one node masked, generate the masked node with its index and text.";
pub const CONTRASTIVE_INSTRUCTION: &str =
    "Given the available search context, generate the document node that completes the final clause.";
pub const RANK_INSTRUCTION: &str =
    "Given the search session graph, answer yes or no: will the user click this document for this query?";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    #[serde(rename = "link")]
    LinkPred,
    #[serde(rename = "node")]
    NodeGen,
    Contrastive,
    Rank,
}

/// Which assembly produced a piece of symbolic text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Node,
    Edge,
    Graph,
    Prompt,
}

/// A piece of text produced by the grammar, tagged with its origin.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SymbolicText {
    pub text: String,
    pub provenance: Provenance,
}

impl SymbolicText {
    pub fn as_str(&self) -> &str {
        &self.text
    }

    pub fn is_empty(&self) -> bool {
        self.text.is_empty()
    }
}

impl fmt::Display for SymbolicText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.text)
    }
}

/// Task instruction with no placeholders and no unescaped meta-characters.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub task_kind: TaskKind,
    pub instruction: String,
}

impl PromptTemplate {
    pub fn new(task_kind: TaskKind, instruction: &str) -> Result<Self, GrammarError> {
        if let Some(ch) = instruction.chars().find(|c| META_CHARS.contains(c)) {
            return Err(GrammarError::InstructionMetaChar { ch });
        }
        Ok(Self {
            task_kind,
            instruction: instruction.to_string(),
        })
    }

    /// The shipped default wording for a task.
    pub fn default_for(task_kind: TaskKind) -> Self {
        let instruction = match task_kind {
            TaskKind::LinkPred => LINK_INSTRUCTION,
            TaskKind::NodeGen => NODE_INSTRUCTION,
            TaskKind::Contrastive => CONTRASTIVE_INSTRUCTION,
            TaskKind::Rank => RANK_INSTRUCTION,
        };
        Self::new(task_kind, instruction).expect("defaults contain no meta-characters")
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum GrammarError {
    #[error("syntax error at byte {offset}: {reason}")]
    Syntax { offset: usize, reason: String },
    #[error("unknown edge type `{found}` at byte {offset}")]
    UnknownEdgeType { offset: usize, found: String },
    #[error("conflicting text for node {node}: `{first}` vs `{second}`")]
    NodeTextConflict {
        node: String,
        first: String,
        second: String,
    },
    #[error("duplicate edge `{0}`")]
    DuplicateEdge(String),
    #[error("instruction contains grammar meta-character `{ch}`")]
    InstructionMetaChar { ch: char },
    #[error("clause shape does not match task {task:?}: expected a {expected} clause")]
    ClauseShapeMismatch { task: TaskKind, expected: String },
}

fn escape_text(raw: &str) -> String {
    let mut out = String::with_capacity(raw.len());
    for ch in raw.chars() {
        match ch {
            '\n' | '\r' => out.push(' '),
            c if META_CHARS.contains(&c) => {
                out.push('\\');
                out.push(c);
            }
            c => out.push(c),
        }
    }
    out
}

/// `SGC_v`: `(q3, MacBook Price?)`.
pub fn serialize_node(v: &NodeRef) -> SymbolicText {
    SymbolicText {
        text: format!("({}, {})", v.id(), escape_text(&v.text)),
        provenance: Provenance::Node,
    }
}

/// `SGC_e`: `(q3, MacBook Price?) <click on> (d5, $1,999)`.
pub fn serialize_edge(e: &Edge) -> SymbolicText {
    SymbolicText {
        text: format!(
            "{} <{}> {}",
            serialize_node(&e.src).text,
            e.edge_type,
            serialize_node(&e.dst).text
        ),
        provenance: Provenance::Edge,
    }
}

/// A clause left dangling after the edge type, as used by the node-generation
/// and contrastive tasks: `(q3, MacBook Price?) <click on>`.
pub fn dangling_clause(v: &NodeRef, edge_type: EdgeType) -> SymbolicText {
    SymbolicText {
        text: format!("{} <{}>", serialize_node(v).text, edge_type),
        provenance: Provenance::Edge,
    }
}

/// `SGC(G)`: edge clauses joined by [`EDGE_SEPARATOR`] in order-key order.
/// A graph without edges serializes to the empty string.
pub fn serialize_graph(g: &SessionGraph) -> SymbolicText {
    let text = g
        .edges
        .iter()
        .map(|e| serialize_edge(e).text)
        .collect::<Vec<_>>()
        .join(EDGE_SEPARATOR);
    SymbolicText {
        text,
        provenance: Provenance::Graph,
    }
}

/// Serialize, dropping whole edges from the front (oldest first) until the
/// text fits in `budget` characters. Never splits a clause; the result is
/// always a suffix of the edge sequence and always parseable.
pub fn truncate_graph_text(g: &SessionGraph, budget: usize) -> SymbolicText {
    let clauses: Vec<String> = g.edges.iter().map(|e| serialize_edge(e).text).collect();
    let lens: Vec<usize> = clauses.iter().map(|c| c.chars().count()).collect();
    let sep_len = EDGE_SEPARATOR.chars().count();
    // Walk from the back, keeping as many trailing clauses as fit.
    let mut total = 0usize;
    let mut keep = 0usize;
    for i in (0..clauses.len()).rev() {
        let extra = if keep == 0 {
            lens[i]
        } else {
            lens[i] + sep_len
        };
        if total + extra > budget {
            break;
        }
        total += extra;
        keep += 1;
    }
    let text = clauses[clauses.len() - keep..].join(EDGE_SEPARATOR);
    SymbolicText {
        text,
        provenance: Provenance::Graph,
    }
}

/// Shape of a clause handed to [`assemble_prompt`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClauseShape {
    /// `node <type> node`
    Full {
        src: NodeRef,
        edge_type: EdgeType,
        dst: NodeRef,
    },
    /// `node <type>`
    Dangling { src: NodeRef, edge_type: EdgeType },
}

/// Assemble a task prompt: `{instruction}\n{graph text}\n{clause}`, with the
/// graph segment omitted entirely when empty (the contrastive no-history
/// variant). The clause must be full for link-prediction and ranking, and
/// dangling for node generation and contrastive sampling.
pub fn assemble_prompt(
    template: &PromptTemplate,
    g_text: &SymbolicText,
    clause: &SymbolicText,
) -> Result<SymbolicText, GrammarError> {
    let shape = parse_clause(&clause.text)?;
    let want_full = matches!(template.task_kind, TaskKind::LinkPred | TaskKind::Rank);
    let ok = match shape {
        ClauseShape::Full { .. } => want_full,
        ClauseShape::Dangling { .. } => !want_full,
    };
    if !ok {
        return Err(GrammarError::ClauseShapeMismatch {
            task: template.task_kind,
            expected: if want_full { "full edge" } else { "dangling" }.to_string(),
        });
    }
    let text = if g_text.is_empty() {
        format!("{}\n{}", template.instruction, clause.text)
    } else {
        format!("{}\n{}\n{}", template.instruction, g_text.text, clause.text)
    };
    Ok(SymbolicText {
        text,
        provenance: Provenance::Prompt,
    })
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn new(src: &'a str) -> Self {
        Self { src, pos: 0 }
    }

    fn rest(&self) -> &'a str {
        &self.src[self.pos..]
    }

    fn at_end(&self) -> bool {
        self.pos >= self.src.len()
    }

    fn err(&self, reason: &str) -> GrammarError {
        GrammarError::Syntax {
            offset: self.pos,
            reason: reason.to_string(),
        }
    }

    fn expect(&mut self, token: &str) -> Result<(), GrammarError> {
        if self.rest().starts_with(token) {
            self.pos += token.len();
            Ok(())
        } else {
            Err(self.err(&format!("expected `{token}`")))
        }
    }

    fn parse_node(&mut self) -> Result<NodeRef, GrammarError> {
        self.expect("(")?;
        let node_type = match self.rest().chars().next() {
            Some('q') => NodeType::Query,
            Some('d') => NodeType::Document,
            _ => return Err(self.err("expected node type `q` or `d`")),
        };
        self.pos += 1;
        let digits: String = self
            .rest()
            .chars()
            .take_while(char::is_ascii_digit)
            .collect();
        if digits.is_empty() {
            return Err(self.err("expected node index digits"));
        }
        self.pos += digits.len();
        let index: usize = digits
            .parse()
            .map_err(|_| self.err("node index out of range"))?;
        if index == 0 {
            return Err(self.err("node index must be positive"));
        }
        self.expect(", ")?;
        let text = self.parse_text()?;
        self.expect(")")?;
        // Parsed nodes have no originating id; text was normalized when the
        // source graph was built.
        Ok(NodeRef {
            node_type,
            index,
            text,
            source_id: String::new(),
        })
    }

    // Reads escaped text up to (not including) the closing `)`.
    fn parse_text(&mut self) -> Result<String, GrammarError> {
        let mut out = String::new();
        let mut iter = self.rest().char_indices();
        while let Some((off, ch)) = iter.next() {
            match ch {
                '\\' => match iter.next() {
                    Some((off2, esc)) if META_CHARS.contains(&esc) => {
                        out.push(esc);
                        let _ = off2;
                    }
                    Some((off2, esc)) => {
                        self.pos += off2;
                        return Err(self.err(&format!("invalid escape `\\{esc}`")));
                    }
                    None => {
                        self.pos += off;
                        return Err(self.err("dangling backslash"));
                    }
                },
                ')' => {
                    self.pos += off;
                    return Ok(out);
                }
                '(' | '<' | '>' | ';' => {
                    self.pos += off;
                    return Err(self.err(&format!("unescaped `{ch}` in node text")));
                }
                c => out.push(c),
            }
        }
        self.pos = self.src.len();
        Err(self.err("unterminated node text"))
    }

    fn parse_edge_type(&mut self) -> Result<EdgeType, GrammarError> {
        self.expect("<")?;
        let start = self.pos;
        let name: String = self.rest().chars().take_while(|&c| c != '>').collect();
        self.pos += name.len();
        if self.at_end() {
            self.pos = start;
            return Err(self.err("unterminated edge type"));
        }
        self.expect(">")?;
        match name.as_str() {
            "click on" => Ok(EdgeType::ClickOn),
            "transfer to" => Ok(EdgeType::TransferTo),
            _ => Err(GrammarError::UnknownEdgeType {
                offset: start,
                found: name,
            }),
        }
    }

    // node " <" type ">" [ " " node ]
    fn parse_clause(&mut self) -> Result<ClauseShape, GrammarError> {
        let src = self.parse_node()?;
        self.expect(" ")?;
        let edge_type = self.parse_edge_type()?;
        if self.rest().starts_with(" (") {
            self.expect(" ")?;
            let dst = self.parse_node()?;
            Ok(ClauseShape::Full {
                src,
                edge_type,
                dst,
            })
        } else {
            Ok(ClauseShape::Dangling { src, edge_type })
        }
    }
}

/// Parse a single clause, full (`a <t> b`) or dangling (`a <t>`).
pub fn parse_clause(s: &str) -> Result<ClauseShape, GrammarError> {
    let mut p = Parser::new(s);
    let clause = p.parse_clause()?;
    if !p.at_end() {
        return Err(p.err("trailing input after clause"));
    }
    Ok(clause)
}

/// Inverse of [`serialize_graph`]. Nodes are reconstructed from their inline
/// content in first-appearance order; the same `(type, index)` appearing with
/// two different texts is a [`GrammarError::NodeTextConflict`].
pub fn parse_graph(s: &str) -> Result<SessionGraph, GrammarError> {
    if s.is_empty() {
        return Ok(SessionGraph::default());
    }
    let mut parser = Parser::new(s);
    let mut nodes: Vec<NodeRef> = Vec::new();
    let mut node_text: HashMap<(NodeType, usize), String> = HashMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut seen_edges: std::collections::HashSet<crate::graph::EdgeKey> =
        std::collections::HashSet::new();

    let mut register = |nodes: &mut Vec<NodeRef>, n: &NodeRef| -> Result<(), GrammarError> {
        match node_text.get(&n.key()) {
            Some(prev) if *prev != n.text => Err(GrammarError::NodeTextConflict {
                node: n.id(),
                first: prev.clone(),
                second: n.text.clone(),
            }),
            Some(_) => Ok(()),
            None => {
                node_text.insert(n.key(), n.text.clone());
                nodes.push(n.clone());
                Ok(())
            }
        }
    };

    loop {
        let clause = parser.parse_clause()?;
        let (src, edge_type, dst) = match clause {
            ClauseShape::Full {
                src,
                edge_type,
                dst,
            } => (src, edge_type, dst),
            ClauseShape::Dangling { .. } => {
                return Err(parser.err("dangling clause inside graph text"))
            }
        };
        register(&mut nodes, &src)?;
        register(&mut nodes, &dst)?;
        let edge = Edge {
            src,
            dst,
            edge_type,
            order_key: edges.len(),
        };
        if !seen_edges.insert((edge.src.key(), edge.dst.key(), edge.edge_type)) {
            return Err(GrammarError::DuplicateEdge(edge.ident()));
        }
        edges.push(edge);
        if parser.at_end() {
            break;
        }
        parser.expect(EDGE_SEPARATOR)?;
    }
    Ok(SessionGraph { nodes, edges })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{build_graph, NodeRef, NodeType};
    use crate::session::{make_context, Document, Query, Session};
    use proptest::prelude::*;

    fn qnode(index: usize, text: &str) -> NodeRef {
        NodeRef::new(NodeType::Query, index, text, "")
    }

    fn dnode(index: usize, text: &str) -> NodeRef {
        NodeRef::new(NodeType::Document, index, text, "")
    }

    fn edge(src: NodeRef, et: EdgeType, dst: NodeRef) -> Edge {
        Edge {
            src,
            dst,
            edge_type: et,
            order_key: 0,
        }
    }

    #[test]
    fn node_rendering_matches_grammar() {
        assert_eq!(
            serialize_node(&qnode(3, "MacBook Price?")).text,
            "(q3, MacBook Price?)"
        );
        assert_eq!(serialize_node(&dnode(5, "$1,999")).text, "(d5, $1,999)");
    }

    #[test]
    fn node_text_escaping() {
        assert_eq!(
            serialize_node(&dnode(1, "a) b; c")).text,
            r"(d1, a\) b\; c)"
        );
        assert_eq!(
            serialize_node(&dnode(2, r"x\y<z>")).text,
            r"(d2, x\\y\<z\>)"
        );
    }

    #[test]
    fn edge_rendering_matches_grammar() {
        let e = edge(
            qnode(3, "MacBook Price?"),
            EdgeType::ClickOn,
            dnode(5, "$1,999"),
        );
        assert_eq!(
            serialize_edge(&e).text,
            "(q3, MacBook Price?) <click on> (d5, $1,999)"
        );
        let t = edge(qnode(1, "a"), EdgeType::TransferTo, qnode(2, "b"));
        assert_eq!(serialize_edge(&t).text, "(q1, a) <transfer to> (q2, b)");
    }

    #[test]
    fn doc_transfer_renders_low_index_first() {
        let t = edge(dnode(1, "x"), EdgeType::TransferTo, dnode(2, "y"));
        assert_eq!(serialize_edge(&t).text, "(d1, x) <transfer to> (d2, y)");
    }

    #[test]
    fn empty_graph_serializes_to_empty_string() {
        assert_eq!(serialize_graph(&SessionGraph::default()).text, "");
    }

    #[test]
    fn fixture_210_serializes_six_clauses() {
        let s = crate::graph::tests::fixture_210();
        let text = serialize_graph(&s).text;
        assert_eq!(text.matches(EDGE_SEPARATOR).count(), 5);
        assert!(text.starts_with("(q1, query 1) <click on> (d1, doc 1)"));
        assert!(text.ends_with("(q2, query 2) <transfer to> (q3, query 3)"));
    }

    #[test]
    fn parse_round_trips_the_paper_edge() {
        let e = edge(
            qnode(3, "MacBook Price?"),
            EdgeType::ClickOn,
            dnode(5, "$1,999"),
        );
        let g = SessionGraph {
            nodes: vec![e.src.clone(), e.dst.clone()],
            edges: vec![e],
        };
        let parsed = parse_graph(&serialize_graph(&g).text).unwrap();
        assert!(parsed.structurally_equal(&g));
    }

    #[test]
    fn unknown_edge_type_rejected() {
        let err = parse_graph("(q1, a) <eats> (q2, b)").unwrap_err();
        assert!(matches!(err, GrammarError::UnknownEdgeType { found, .. } if found == "eats"));
    }

    #[test]
    fn node_text_conflict_detected() {
        let err =
            parse_graph("(q1, a) <click on> (d1, x) ; (q1, b) <transfer to> (q2, c)").unwrap_err();
        assert!(
            matches!(err, GrammarError::NodeTextConflict { ref node, .. } if node == "q1"),
            "{err:?}"
        );
    }

    #[test]
    fn duplicate_edge_rejected() {
        let err =
            parse_graph("(q1, a) <click on> (d1, x) ; (q1, a) <click on> (d1, x)").unwrap_err();
        assert!(matches!(err, GrammarError::DuplicateEdge(_)));
    }

    #[test]
    fn syntax_error_carries_byte_offset() {
        let err = parse_graph("(q1, a) <click on> (dx, y)").unwrap_err();
        match err {
            GrammarError::Syntax { offset, .. } => assert_eq!(offset, 21),
            other => panic!("expected syntax error, got {other:?}"),
        }
    }

    #[test]
    fn truncate_noop_when_budget_suffices() {
        let g = crate::graph::tests::fixture_210();
        let full = serialize_graph(&g).text;
        assert_eq!(truncate_graph_text(&g, full.chars().count()).text, full);
        assert_eq!(truncate_graph_text(&g, usize::MAX).text, full);
    }

    #[test]
    fn truncate_zero_budget_is_empty() {
        let g = crate::graph::tests::fixture_210();
        assert_eq!(truncate_graph_text(&g, 0).text, "");
    }

    #[test]
    fn truncate_keeps_exactly_the_last_edges_that_fit() {
        let g = crate::graph::tests::fixture_210();
        let clauses: Vec<String> = g.edges.iter().map(|e| serialize_edge(e).text).collect();
        let last_two: String = clauses[clauses.len() - 2..].join(EDGE_SEPARATOR);
        let budget = last_two.chars().count();
        assert_eq!(truncate_graph_text(&g, budget).text, last_two);
        // One char less drops a whole edge, never splits one.
        let smaller = truncate_graph_text(&g, budget - 1).text;
        assert_eq!(smaller, clauses[clauses.len() - 1]);
        parse_graph(&smaller).unwrap();
    }

    #[test]
    fn assemble_rank_prompt_ends_with_candidate_clause() {
        let tmpl = PromptTemplate::default_for(TaskKind::Rank);
        let g = crate::graph::tests::fixture_210();
        let clause = serialize_edge(&edge(
            qnode(3, "query 3"),
            EdgeType::ClickOn,
            dnode(9, "candidate"),
        ));
        let prompt = assemble_prompt(&tmpl, &serialize_graph(&g), &clause).unwrap();
        assert!(prompt.text.ends_with("<click on> (d9, candidate)"));
        assert!(prompt.text.starts_with(RANK_INSTRUCTION));
        assert_eq!(prompt.text.matches('\n').count(), 2);
    }

    #[test]
    fn assemble_collapses_empty_graph_segment() {
        let tmpl = PromptTemplate::default_for(TaskKind::Contrastive);
        let clause = dangling_clause(&qnode(1, "a"), EdgeType::ClickOn);
        let empty = SymbolicText {
            text: String::new(),
            provenance: Provenance::Graph,
        };
        let prompt = assemble_prompt(&tmpl, &empty, &clause).unwrap();
        assert_eq!(
            prompt.text,
            format!("{CONTRASTIVE_INSTRUCTION}\n(q1, a) <click on>")
        );
    }

    #[test]
    fn clause_shape_is_enforced_per_task() {
        let g = crate::graph::tests::fixture_210();
        let g_text = serialize_graph(&g);
        let dangling = dangling_clause(&qnode(1, "a"), EdgeType::ClickOn);
        let full = serialize_edge(&edge(qnode(1, "a"), EdgeType::ClickOn, dnode(1, "x")));
        let rank = PromptTemplate::default_for(TaskKind::Rank);
        let nodegen = PromptTemplate::default_for(TaskKind::NodeGen);
        assert!(matches!(
            assemble_prompt(&rank, &g_text, &dangling),
            Err(GrammarError::ClauseShapeMismatch { .. })
        ));
        assert!(matches!(
            assemble_prompt(&nodegen, &g_text, &full),
            Err(GrammarError::ClauseShapeMismatch { .. })
        ));
        assert!(assemble_prompt(&rank, &g_text, &full).is_ok());
        assert!(assemble_prompt(&nodegen, &g_text, &dangling).is_ok());
    }

    #[test]
    fn instruction_meta_chars_rejected() {
        assert!(matches!(
            PromptTemplate::new(TaskKind::Rank, "answer (yes)"),
            Err(GrammarError::InstructionMetaChar { ch: '(' })
        ));
        PromptTemplate::new(TaskKind::Rank, "plain words only").unwrap();
    }

    // ---- property tests ----------------------------------------------------

    fn arb_text() -> impl Strategy<Value = String> {
        proptest::collection::vec(
            prop_oneof![
                Just('('),
                Just(')'),
                Just('<'),
                Just('>'),
                Just(';'),
                Just('\\'),
                Just(' '),
                Just('日'),
                Just('€'),
                proptest::char::range('a', 'z'),
            ],
            0..12,
        )
        .prop_map(|cs| cs.into_iter().collect())
    }

    fn arb_session() -> impl Strategy<Value = Session> {
        // Up to 4 queries, up to 3 candidates each, adversarial texts.
        proptest::collection::vec(
            (
                arb_text(),
                proptest::collection::vec((arb_text(), proptest::bool::ANY), 0..4),
            ),
            1..5,
        )
        .prop_map(|qs| {
            let mut doc_no = 0usize;
            let queries = qs
                .into_iter()
                .enumerate()
                .map(|(j, (text, docs))| Query {
                    query_id: format!("q{}", j + 1),
                    text,
                    timestamp: j as i64,
                    candidates: docs
                        .into_iter()
                        .map(|(dtext, click)| {
                            doc_no += 1;
                            Document {
                                doc_id: format!("d{doc_no}"),
                                text: dtext,
                                click: u8::from(click),
                            }
                        })
                        .collect(),
                })
                .collect();
            Session {
                session_id: "s".into(),
                queries,
            }
        })
    }

    proptest! {
        #[test]
        fn graph_text_round_trips(session in arb_session()) {
            for step in 1..=session.queries.len() {
                let g = build_graph(&make_context(&session, step).unwrap());
                let text = serialize_graph(&g).text;
                let parsed = parse_graph(&text).unwrap();
                prop_assert!(parsed.structurally_equal(&g));
            }
        }

        #[test]
        fn truncation_is_a_parseable_suffix(session in arb_session(), budget in 0usize..300) {
            let step = session.queries.len();
            let g = build_graph(&make_context(&session, step).unwrap());
            let truncated = truncate_graph_text(&g, budget).text;
            prop_assert!(truncated.chars().count() <= budget || truncated.is_empty());
            let full = serialize_graph(&g).text;
            prop_assert!(full.ends_with(&truncated));
            let sub = parse_graph(&truncated).unwrap();
            let full_graph = parse_graph(&full).unwrap();
            let n = sub.edges.len();
            let tail = &full_graph.edges[full_graph.edges.len() - n..];
            for (a, b) in sub.edges.iter().zip(tail) {
                prop_assert_eq!(a.ident(), b.ident());
            }
        }

        #[test]
        fn serialization_is_injective_on_structure(s1 in arb_session(), s2 in arb_session()) {
            let g1 = build_graph(&make_context(&s1, s1.queries.len()).unwrap());
            let g2 = build_graph(&make_context(&s2, s2.queries.len()).unwrap());
            let t1 = serialize_graph(&g1).text;
            let t2 = serialize_graph(&g2).text;
            if t1 == t2 {
                prop_assert!(g1.structurally_equal(&g2));
            } else {
                prop_assert!(!g1.structurally_equal(&g2));
            }
        }
    }
}
