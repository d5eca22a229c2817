//! Labeled semantic DAGs and their variable-free top-down linearization.
//!
//! The text form is
//!
//! ```text
//! graph       := '(' node-label ['*' integer] (':' role graph-or-ref)* ')'
//! graph-or-ref := graph | '*' integer
//! ```
//!
//! A `*k` directly after a node label declares reentrancy id `k`; a bare `*k`
//! in argument position refers back to that node.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type NodeId = usize;
pub type EdgeId = usize;

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub id: NodeId,
    pub label: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    #[serde(rename = "src")]
    pub source: NodeId,
    #[serde(rename = "tgt")]
    pub target: NodeId,
    pub label: String,
}

/// A node or an edge of a [`SemanticGraph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphElement {
    Node(NodeId),
    Edge(EdgeId),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum GraphError {
    #[error("graph has no nodes")]
    Empty,
    #[error("node at position {position} has id {id}; ids must be dense and ordered")]
    NonDenseId { position: usize, id: NodeId },
    #[error("invalid symbol {0:?}")]
    InvalidLabel(String),
    #[error("root {0} does not exist")]
    MissingRoot(NodeId),
    #[error("edge {edge} references unknown node {node}")]
    UnknownNode { edge: EdgeId, node: NodeId },
    #[error("edge {0} is a self-loop")]
    SelfLoop(EdgeId),
    #[error("edge {0} duplicates an earlier edge")]
    DuplicateEdge(EdgeId),
    #[error("graph contains a cycle through node {0}")]
    Cyclic(NodeId),
    #[error("node {0} is not reachable from the root")]
    Disconnected(NodeId),
}

/// Errors from [`parse_linearized`]. Positions count characters from 1.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseError {
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("reference *{marker} at position {position} was never declared")]
    DanglingReference { position: usize, marker: u32 },
    #[error("reference *{marker} at position {position} points to an enclosing node")]
    CyclicReference { position: usize, marker: u32 },
    #[error("reentrancy id *{marker} declared twice (position {position})")]
    DuplicateMarker { position: usize, marker: u32 },
    #[error("duplicate edge at position {position}")]
    DuplicateEdge { position: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

impl ParseError {
    pub fn position(&self) -> Option<usize> {
        match self {
            ParseError::Syntax { position, .. }
            | ParseError::DanglingReference { position, .. }
            | ParseError::CyclicReference { position, .. }
            | ParseError::DuplicateMarker { position, .. }
            | ParseError::DuplicateEdge { position } => Some(*position),
            ParseError::Graph(_) => None,
        }
    }
}

/// Characters that can never be part of a node label or role.
pub fn is_structural(c: char) -> bool {
    c.is_whitespace() || matches!(c, '(' | ')' | ':' | '*')
}

fn valid_symbol(s: &str) -> bool {
    !s.is_empty() && !s.chars().any(is_structural) && !s.chars().any(char::is_control)
}

/// A rooted, connected, labeled DAG.
///
/// Construction always validates, so every value of this type upholds the
/// invariants: dense node ids, existing edge endpoints, no self-loops, no
/// duplicate edges, acyclic, and every node reachable from the root.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawGraph")]
pub struct SemanticGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root: NodeId,
}

#[derive(Deserialize)]
struct RawGraph {
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    root: NodeId,
}

impl TryFrom<RawGraph> for SemanticGraph {
    type Error = GraphError;

    fn try_from(raw: RawGraph) -> Result<Self, Self::Error> {
        SemanticGraph::new(raw.nodes, raw.edges, raw.root)
    }
}

impl SemanticGraph {
    pub fn new(nodes: Vec<Node>, edges: Vec<Edge>, root: NodeId) -> Result<Self, GraphError> {
        if nodes.is_empty() {
            return Err(GraphError::Empty);
        }
        for (position, node) in nodes.iter().enumerate() {
            if node.id != position {
                return Err(GraphError::NonDenseId { position, id: node.id });
            }
            if !valid_symbol(&node.label) {
                return Err(GraphError::InvalidLabel(node.label.clone()));
            }
        }
        if root >= nodes.len() {
            return Err(GraphError::MissingRoot(root));
        }
        let mut seen = HashSet::new();
        for (id, edge) in edges.iter().enumerate() {
            for node in [edge.source, edge.target] {
                if node >= nodes.len() {
                    return Err(GraphError::UnknownNode { edge: id, node });
                }
            }
            if !valid_symbol(&edge.label) {
                return Err(GraphError::InvalidLabel(edge.label.clone()));
            }
            if edge.source == edge.target {
                return Err(GraphError::SelfLoop(id));
            }
            if !seen.insert((edge.source, edge.label.as_str(), edge.target)) {
                return Err(GraphError::DuplicateEdge(id));
            }
        }
        let graph = SemanticGraph { nodes, edges, root };
        graph.check_acyclic_connected()?;
        Ok(graph)
    }

    /// Builds a graph from node labels and `(source, role, target)` triples.
    pub fn from_parts<S: AsRef<str>>(
        labels: &[S],
        edges: &[(NodeId, &str, NodeId)],
        root: NodeId,
    ) -> Result<Self, GraphError> {
        let nodes = labels.iter().enumerate().map(|(id, l)| Node { id, label: l.as_ref().to_string() }).collect();
        let edges =
            edges.iter().map(|&(source, label, target)| Edge { source, target, label: label.to_string() }).collect();
        SemanticGraph::new(nodes, edges, root)
    }

    fn check_acyclic_connected(&self) -> Result<(), GraphError> {
        // 0 = unvisited, 1 = on stack, 2 = done
        let out = self.out_edges();
        let mut state = vec![0u8; self.nodes.len()];
        let mut stack: Vec<(NodeId, usize)> = vec![(self.root, 0)];
        state[self.root] = 1;
        while let Some((node, next)) = stack.last_mut() {
            let node = *node;
            if let Some(&edge) = out[node].get(*next) {
                *next += 1;
                let target = self.edges[edge].target;
                match state[target] {
                    0 => {
                        state[target] = 1;
                        stack.push((target, 0));
                    }
                    1 => return Err(GraphError::Cyclic(target)),
                    _ => {}
                }
            } else {
                state[node] = 2;
                stack.pop();
            }
        }
        if let Some(unreached) = state.iter().position(|&s| s == 0) {
            // An unreachable node may still sit on a cycle; report the cycle first.
            let mut indegree = vec![0usize; self.nodes.len()];
            for e in &self.edges {
                indegree[e.target] += 1;
            }
            let mut queue: Vec<NodeId> = (0..self.nodes.len()).filter(|&n| indegree[n] == 0).collect();
            let mut removed = 0;
            while let Some(n) = queue.pop() {
                removed += 1;
                for &e in &out[n] {
                    let t = self.edges[e].target;
                    indegree[t] -= 1;
                    if indegree[t] == 0 {
                        queue.push(t);
                    }
                }
            }
            if removed < self.nodes.len() {
                let on_cycle = indegree.iter().position(|&d| d > 0).unwrap_or(unreached);
                return Err(GraphError::Cyclic(on_cycle));
            }
            return Err(GraphError::Disconnected(unreached));
        }
        Ok(())
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn root(&self) -> NodeId {
        self.root
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn label(&self, node: NodeId) -> &str {
        &self.nodes[node].label
    }

    /// Label of a node or edge.
    pub fn element_label(&self, element: GraphElement) -> &str {
        match element {
            GraphElement::Node(n) => &self.nodes[n].label,
            GraphElement::Edge(e) => &self.edges[e].label,
        }
    }

    /// Outgoing edge ids per node, in stored edge order.
    pub fn out_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut out = vec![Vec::new(); self.nodes.len()];
        for (id, e) in self.edges.iter().enumerate() {
            out[e.source].push(id);
        }
        out
    }

    /// Incoming edge ids per node, in stored edge order.
    pub fn in_edges(&self) -> Vec<Vec<EdgeId>> {
        let mut inc = vec![Vec::new(); self.nodes.len()];
        for (id, e) in self.edges.iter().enumerate() {
            inc[e.target].push(id);
        }
        inc
    }

    /// Nodes and edges in the order the canonical linearization mentions them.
    /// Reentrant nodes appear once, at their first occurrence.
    pub fn element_order(&self) -> Vec<GraphElement> {
        let out = self.out_edges();
        let mut order = Vec::with_capacity(self.nodes.len() + self.edges.len());
        let mut visited = vec![false; self.nodes.len()];
        let mut stack: Vec<(NodeId, usize)> = vec![(self.root, 0)];
        visited[self.root] = true;
        order.push(GraphElement::Node(self.root));
        while let Some((node, next)) = stack.last_mut() {
            if let Some(&edge) = out[*node].get(*next) {
                *next += 1;
                order.push(GraphElement::Edge(edge));
                let target = self.edges[edge].target;
                if !visited[target] {
                    visited[target] = true;
                    order.push(GraphElement::Node(target));
                    stack.push((target, 0));
                }
            } else {
                stack.pop();
            }
        }
        order
    }

    /// Canonical linearization: children in stored edge order, reentrant nodes
    /// inlined at first occurrence and referenced as `*k` afterwards, with `k`
    /// numbered by first occurrence.
    pub fn serialize(&self) -> String {
        let out = self.out_edges();
        let mut indegree = vec![0usize; self.nodes.len()];
        for e in &self.edges {
            indegree[e.target] += 1;
        }
        let mut markers: HashMap<NodeId, u32> = HashMap::new();
        let mut text = String::new();
        self.write_node(self.root, &out, &indegree, &mut markers, &mut text);
        text
    }

    fn write_node(
        &self,
        node: NodeId,
        out: &[Vec<EdgeId>],
        indegree: &[usize],
        markers: &mut HashMap<NodeId, u32>,
        text: &mut String,
    ) {
        text.push('(');
        text.push_str(&self.nodes[node].label);
        if indegree[node] > 1 {
            let k = markers.len() as u32 + 1;
            markers.insert(node, k);
            text.push_str(&format!(" *{k}"));
        }
        for &edge in &out[node] {
            let e = &self.edges[edge];
            text.push_str(" :");
            text.push_str(&e.label);
            text.push(' ');
            match markers.get(&e.target) {
                Some(k) => text.push_str(&format!("*{k}")),
                None => self.write_node(e.target, out, indegree, markers, text),
            }
        }
        text.push(')');
    }

    /// Instance, relation and top triples; `|N| + |E| + 1` of them.
    pub fn triples(&self) -> Vec<Triple> {
        let mut triples = Vec::with_capacity(self.nodes.len() + self.edges.len() + 1);
        triples.extend(self.nodes.iter().map(|n| Triple::Instance(n.id, n.label.clone())));
        triples.extend(self.edges.iter().map(|e| Triple::Relation(e.label.clone(), e.source, e.target)));
        triples.push(Triple::Top(self.root));
        triples
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("graph serializes to JSON")
    }
}

impl fmt::Display for SemanticGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.serialize())
    }
}

impl std::str::FromStr for SemanticGraph {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_linearized(s).map(|(g, _)| g)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Triple {
    Instance(NodeId, String),
    Relation(String, NodeId, NodeId),
    Top(NodeId),
}

impl fmt::Display for Triple {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Triple::Instance(n, l) => write!(f, "instance({n},{l})"),
            Triple::Relation(l, s, t) => write!(f, "{l}({s},{t})"),
            Triple::Top(n) => write!(f, "top({n})"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymbolKind {
    NodeLabel,
    EdgeRole,
    ReentrancyRef,
}

/// A symbol occurrence in the linearized text. Offsets are character
/// offsets, `start` inclusive and `end` exclusive.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolSpan {
    pub start: usize,
    pub end: usize,
    pub kind: SymbolKind,
    pub element: GraphElement,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinearizedGraph {
    pub text: String,
    pub symbols: Vec<SymbolSpan>,
}

impl LinearizedGraph {
    pub fn symbol_text(&self, index: usize) -> String {
        let span = &self.symbols[index];
        self.text.chars().skip(span.start).take(span.end - span.start).collect()
    }

    pub fn symbol_texts(&self) -> Vec<String> {
        let chars: Vec<char> = self.text.chars().collect();
        self.symbols.iter().map(|s| chars[s.start..s.end].iter().collect()).collect()
    }

    /// Index of the span that introduces a node (its label) or an edge (its role).
    pub fn element_span(&self, element: GraphElement) -> Option<usize> {
        self.symbols.iter().position(|s| s.element == element && s.kind != SymbolKind::ReentrancyRef)
    }

    /// Index of the span covering the given character offset, if any.
    pub fn span_at(&self, offset: usize) -> Option<usize> {
        let i = self.symbols.partition_point(|s| s.end <= offset);
        self.symbols.get(i).filter(|s| s.start <= offset && offset < s.end).map(|_| i)
    }
}

/// Parses one graph, returning it along with the symbol spans of the text.
pub fn parse_linearized(text: &str) -> Result<(SemanticGraph, LinearizedGraph), ParseError> {
    let mut parser = Parser {
        chars: text.chars().collect(),
        pos: 0,
        nodes: Vec::new(),
        edges: Vec::new(),
        edge_set: HashSet::new(),
        symbols: Vec::new(),
        markers: HashMap::new(),
        open: Vec::new(),
    };
    parser.skip_ws();
    let root = parser.graph()?;
    parser.skip_ws();
    if parser.pos < parser.chars.len() {
        return Err(parser.syntax("unexpected input after the graph"));
    }
    let graph = SemanticGraph::new(parser.nodes, parser.edges, root)?;
    Ok((graph, LinearizedGraph { text: text.to_string(), symbols: parser.symbols }))
}

struct Parser {
    chars: Vec<char>,
    pos: usize,
    nodes: Vec<Node>,
    edges: Vec<Edge>,
    edge_set: HashSet<(NodeId, String, NodeId)>,
    symbols: Vec<SymbolSpan>,
    markers: HashMap<u32, NodeId>,
    open: Vec<NodeId>,
}

impl Parser {
    fn peek(&self) -> Option<char> {
        self.chars.get(self.pos).copied()
    }

    fn skip_ws(&mut self) {
        while self.peek().is_some_and(char::is_whitespace) {
            self.pos += 1;
        }
    }

    fn syntax(&self, message: &str) -> ParseError {
        let message = match self.peek() {
            None => format!("{message} (found end of input)"),
            Some(c) => format!("{message} (found {c:?})"),
        };
        ParseError::Syntax { position: self.pos + 1, message }
    }

    fn symbol(&mut self) -> Option<(usize, usize, String)> {
        let start = self.pos;
        while self.peek().is_some_and(|c| !is_structural(c)) {
            self.pos += 1;
        }
        (self.pos > start).then(|| (start, self.pos, self.chars[start..self.pos].iter().collect()))
    }

    fn marker(&mut self) -> Result<(usize, u32), ParseError> {
        let start = self.pos;
        debug_assert_eq!(self.peek(), Some('*'));
        self.pos += 1;
        let digits_start = self.pos;
        while self.peek().is_some_and(|c| c.is_ascii_digit()) {
            self.pos += 1;
        }
        if self.pos == digits_start {
            return Err(self.syntax("expected digits after '*'"));
        }
        let digits: String = self.chars[digits_start..self.pos].iter().collect();
        let k = digits.parse::<u32>().map_err(|_| ParseError::Syntax {
            position: digits_start + 1,
            message: "reentrancy id out of range".into(),
        })?;
        Ok((start, k))
    }

    fn graph(&mut self) -> Result<NodeId, ParseError> {
        if self.peek() != Some('(') {
            return Err(self.syntax("expected '('"));
        }
        self.pos += 1;
        self.skip_ws();
        let (start, end, label) = self.symbol().ok_or_else(|| self.syntax("expected a node label"))?;
        let id = self.nodes.len();
        self.nodes.push(Node { id, label });
        self.symbols.push(SymbolSpan { start, end, kind: SymbolKind::NodeLabel, element: GraphElement::Node(id) });
        self.open.push(id);
        self.skip_ws();
        if self.peek() == Some('*') {
            let (at, k) = self.marker()?;
            if self.markers.insert(k, id).is_some() {
                return Err(ParseError::DuplicateMarker { position: at + 1, marker: k });
            }
        }
        loop {
            self.skip_ws();
            match self.peek() {
                Some(')') => {
                    self.pos += 1;
                    break;
                }
                Some(':') => {
                    let edge_pos = self.pos;
                    self.pos += 1;
                    let (start, end, role) = self.symbol().ok_or_else(|| self.syntax("expected a role after ':'"))?;
                    let edge_id = self.edges.len();
                    self.edges.push(Edge { source: id, target: usize::MAX, label: role.clone() });
                    self.symbols.push(SymbolSpan {
                        start,
                        end,
                        kind: SymbolKind::EdgeRole,
                        element: GraphElement::Edge(edge_id),
                    });
                    self.skip_ws();
                    let target = match self.peek() {
                        Some('(') => self.graph()?,
                        Some('*') => {
                            let (at, k) = self.marker()?;
                            let target = *self
                                .markers
                                .get(&k)
                                .ok_or(ParseError::DanglingReference { position: at + 1, marker: k })?;
                            if self.open.contains(&target) {
                                return Err(ParseError::CyclicReference { position: at + 1, marker: k });
                            }
                            self.symbols.push(SymbolSpan {
                                start: at,
                                end: self.pos,
                                kind: SymbolKind::ReentrancyRef,
                                element: GraphElement::Node(target),
                            });
                            target
                        }
                        _ => return Err(self.syntax("expected '(' or '*'")),
                    };
                    self.edges[edge_id].target = target;
                    if !self.edge_set.insert((id, role, target)) {
                        return Err(ParseError::DuplicateEdge { position: edge_pos + 1 });
                    }
                }
                _ => return Err(self.syntax("expected ':' or ')'")),
            }
        }
        self.open.pop();
        Ok(id)
    }
}

/// Builds the canonical linearization of a graph together with its spans.
pub fn linearize(graph: &SemanticGraph) -> LinearizedGraph {
    parse_linearized(&graph.serialize()).expect("canonical serialization parses").1
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_two_node_graph() {
        let (g, lin) = parse_linearized("(_a_n :ARG1 (_b_n))").unwrap();
        assert_eq!(g.node_count(), 2);
        assert_eq!(g.label(0), "_a_n");
        assert_eq!(g.label(1), "_b_n");
        assert_eq!(g.edges(), &[Edge { source: 0, target: 1, label: "ARG1".into() }]);
        assert_eq!(g.root(), 0);
        assert_eq!(lin.symbol_texts(), vec!["_a_n", "ARG1", "_b_n"]);
    }

    #[test]
    fn parses_reentrancy() {
        let text = "(_a_v :ARG1 (_p_n *1) :ARG2 (_q_n :ARG1 *1))";
        let (g, lin) = parse_linearized(text).unwrap();
        assert_eq!(g.node_count(), 3);
        assert_eq!(g.edge_count(), 3);
        let p = g.nodes().iter().position(|n| n.label == "_p_n").unwrap();
        assert_eq!(g.in_edges()[p].len(), 2);
        assert_eq!(lin.symbols.iter().filter(|s| s.kind == SymbolKind::ReentrancyRef).count(), 1);
        assert_eq!(g.serialize(), text);
    }

    #[test]
    fn unclosed_graph_reports_position() {
        let err = parse_linearized("(_a_n :ARG1").unwrap_err();
        assert!(matches!(err, ParseError::Syntax { .. }));
        assert_eq!(err.position(), Some(12));
    }

    #[test]
    fn rejects_bad_references() {
        assert!(matches!(parse_linearized("(_a :ARG1 *3)"), Err(ParseError::DanglingReference { marker: 3, .. })));
        assert!(matches!(
            parse_linearized("(_a *1 :ARG1 (_b :ARG1 *1))"),
            Err(ParseError::CyclicReference { marker: 1, .. })
        ));
        assert!(matches!(parse_linearized("(_a *1 :ARG1 *1)"), Err(ParseError::CyclicReference { .. })));
        assert!(matches!(parse_linearized("(_a *1 :ARG1 (_b *1))"), Err(ParseError::DuplicateMarker { .. })));
    }

    #[test]
    fn rejects_duplicate_edges_and_junk() {
        assert!(matches!(parse_linearized("(_a :ARG1 (_b *1) :ARG1 *1)"), Err(ParseError::DuplicateEdge { .. })));
        assert!(parse_linearized("(_a) (_b)").is_err());
        assert!(parse_linearized("").is_err());
        assert!(parse_linearized("(:ARG1 (_b))").is_err());
        assert!(parse_linearized("(_a : (_b))").is_err());
        assert!(parse_linearized("(_a :ARG1 *)").is_err());
    }

    #[test]
    fn construction_validates_invariants() {
        assert_eq!(SemanticGraph::from_parts(&["a", "b", "c"], &[(0, "R", 1)], 0), Err(GraphError::Disconnected(2)));
        assert_eq!(SemanticGraph::from_parts(&["a", "b"], &[(0, "R", 1), (1, "R", 0)], 0), Err(GraphError::Cyclic(0)));
        assert_eq!(SemanticGraph::from_parts(&["a"], &[(0, "R", 0)], 0), Err(GraphError::SelfLoop(0)));
        assert_eq!(
            SemanticGraph::from_parts(&["a", "b"], &[(0, "R", 1), (0, "R", 1)], 0),
            Err(GraphError::DuplicateEdge(1))
        );
        assert_eq!(SemanticGraph::from_parts::<&str>(&[], &[], 0), Err(GraphError::Empty));
        assert_eq!(SemanticGraph::from_parts(&["a b"], &[], 0), Err(GraphError::InvalidLabel("a b".into())));
        assert_eq!(
            SemanticGraph::from_parts(&["a", "b", "c"], &[(0, "R", 1), (1, "R", 2), (2, "R", 1)], 0),
            Err(GraphError::Cyclic(1))
        );
    }

    #[test]
    fn triples_of_small_graphs() {
        let g: SemanticGraph = "(_a_n :ARG1 (_b_n))".parse().unwrap();
        let t = g.triples();
        assert_eq!(
            t,
            vec![
                Triple::Instance(0, "_a_n".into()),
                Triple::Instance(1, "_b_n".into()),
                Triple::Relation("ARG1".into(), 0, 1),
                Triple::Top(0),
            ]
        );
        let g: SemanticGraph = "(_a_v :ARG1 (_p_n *1) :ARG2 (_q_n :ARG1 *1))".parse().unwrap();
        assert_eq!(g.triples().len(), 7);
    }

    #[test]
    fn json_form() {
        let g: SemanticGraph = "(_a_n :ARG1 (_b_n))".parse().unwrap();
        let json = serde_json::to_string(&g).unwrap();
        assert_eq!(
            json,
            r#"{"nodes":[{"id":0,"label":"_a_n"},{"id":1,"label":"_b_n"}],"edges":[{"src":0,"tgt":1,"label":"ARG1"}],"root":0}"#
        );
        let back: SemanticGraph = serde_json::from_str(&json).unwrap();
        assert_eq!(back, g);
        let bad = r#"{"nodes":[{"id":0,"label":"a"},{"id":1,"label":"b"}],"edges":[],"root":0}"#;
        assert!(serde_json::from_str::<SemanticGraph>(bad).is_err());
    }

    #[test]
    fn spans_and_structure_reconstruct_text() {
        let text = "(_a_v  :ARG1 (_p_n *1)\t:ARG2 (_q_n :ARG1 *1))";
        let (_, lin) = parse_linearized(text).unwrap();
        let chars: Vec<char> = text.chars().collect();
        let mut covered = vec![false; chars.len()];
        let mut prev_end = 0;
        for s in &lin.symbols {
            assert!(s.start >= prev_end && s.start < s.end && s.end <= chars.len());
            prev_end = s.end;
            for c in covered.iter_mut().take(s.end).skip(s.start) {
                *c = true;
            }
        }
        for (i, c) in chars.iter().enumerate() {
            if !covered[i] {
                assert!(is_structural(*c) || c.is_ascii_digit(), "{c:?} at {i}");
            }
        }
        assert_eq!(lin.span_at(1), Some(0));
        assert_eq!(lin.span_at(0), None);
    }

    #[test]
    fn element_order_matches_span_order() {
        let (g, lin) = parse_linearized("(_a_v :ARG1 (_p_n *1) :ARG2 (_q_n :ARG1 *1))").unwrap();
        let from_spans: Vec<GraphElement> =
            lin.symbols.iter().filter(|s| s.kind != SymbolKind::ReentrancyRef).map(|s| s.element).collect();
        assert_eq!(g.element_order(), from_spans);
    }

    #[test]
    fn unicode_labels_use_character_offsets() {
        let (g, lin) = parse_linearized("(_café_n :ARG1 (_b))").unwrap();
        assert_eq!(g.label(0), "_café_n");
        assert_eq!(lin.symbols[1].start, 10);
        assert_eq!(lin.symbol_text(1), "ARG1");
    }
}
