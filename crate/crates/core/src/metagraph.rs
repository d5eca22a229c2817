//! Meta graph: the union of several candidate graphs, with one variable per
//! aligned node or edge and the set of values each variable takes.
//!
//! Edge variables sit between node variables: for an edge `u -[r]-> w` the
//! variable DAG holds `u -> e -> w`, so `pa(e) = {u}` and `e ∈ pa(w)`.

use std::collections::{BTreeSet, HashSet};

use serde::Serialize;
use thiserror::Error;

use crate::gap::GapTables;
use crate::graph::{Edge, GraphElement, GraphError, Node, NodeId, SemanticGraph};
use crate::smatch::{align_with, AlignConfig};

pub type VarId = usize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetaError {
    #[error("no graphs to merge")]
    Empty,
    #[error("meta graph scaffold is not a valid graph: {0}")]
    Scaffold(#[from] GraphError),
}

/// Where a graph being merged came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Source {
    Beam(usize),
    Symbolic,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct Provenance {
    /// Beam indices realizing this value, ascending.
    pub beams: Vec<usize>,
    pub symbolic: bool,
}

impl Provenance {
    pub fn is_neural(&self) -> bool {
        !self.beams.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CandidateEntry {
    pub symbol: String,
    #[serde(flatten)]
    pub provenance: Provenance,
}

/// Values observed for one variable, in first-seen order.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct CandidateSet {
    entries: Vec<CandidateEntry>,
}

impl CandidateSet {
    fn add(&mut self, symbol: &str, source: Source) {
        let idx = match self.entries.iter().position(|e| e.symbol == symbol) {
            Some(i) => i,
            None => {
                self.entries.push(CandidateEntry { symbol: symbol.to_string(), provenance: Provenance::default() });
                self.entries.len() - 1
            }
        };
        let prov = &mut self.entries[idx].provenance;
        match source {
            Source::Beam(k) => {
                if let Err(at) = prov.beams.binary_search(&k) {
                    prov.beams.insert(at, k);
                }
            }
            Source::Symbolic => prov.symbolic = true,
        }
    }

    pub fn get(&self, symbol: &str) -> Option<&Provenance> {
        self.entries.iter().find(|e| e.symbol == symbol).map(|e| &e.provenance)
    }

    pub fn contains(&self, symbol: &str) -> bool {
        self.get(symbol).is_some()
    }

    pub fn iter(&self) -> impl Iterator<Item = &CandidateEntry> {
        self.entries.iter()
    }

    pub fn symbols(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.symbol.as_str())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Most beam-supported value; earliest seen on ties.
    fn representative(&self) -> &str {
        let mut best = &self.entries[0];
        for e in &self.entries[1..] {
            if e.provenance.beams.len() > best.provenance.beams.len() {
                best = e;
            }
        }
        &best.symbol
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VarKind {
    Node,
    Edge { source: VarId, target: VarId },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetaVariable {
    pub id: VarId,
    #[serde(flatten)]
    pub kind: VarKind,
    pub candidates: CandidateSet,
    pub parents: Vec<VarId>,
    pub children: Vec<VarId>,
}

impl MetaVariable {
    pub fn is_node(&self) -> bool {
        matches!(self.kind, VarKind::Node)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetaGraph {
    variables: Vec<MetaVariable>,
    root_var: VarId,
    /// `beam_realizations[k][v]`: the element of beam `k` realizing `v`.
    beam_realizations: Vec<Vec<Option<GraphElement>>>,
    symbolic_realization: Option<Vec<Option<GraphElement>>>,
}

/// Merges `graphs` (best first) into a meta graph anchored on the first.
pub fn build_meta_graph(graphs: &[&SemanticGraph], align: &AlignConfig) -> Result<MetaGraph, MetaError> {
    if graphs.is_empty() {
        return Err(MetaError::Empty);
    }
    let mut meta =
        MetaGraph { variables: Vec::new(), root_var: 0, beam_realizations: Vec::new(), symbolic_realization: None };
    for (k, g) in graphs.iter().enumerate() {
        meta.beam_realizations.push(Vec::new());
        meta.merge(g, Source::Beam(k), align)?;
    }
    Ok(meta)
}

/// Aligns the symbolic graph to `meta`, flagging the values it contains and
/// adding the ones no beam produced.
pub fn attach_symbolic(
    meta: &MetaGraph,
    symbolic: &SemanticGraph,
    align: &AlignConfig,
) -> Result<MetaGraph, MetaError> {
    let mut out = meta.clone();
    out.symbolic_realization = Some(vec![None; out.variables.len()]);
    out.merge(symbolic, Source::Symbolic, align)?;
    Ok(out)
}

impl MetaGraph {
    pub fn variables(&self) -> &[MetaVariable] {
        &self.variables
    }

    pub fn variable(&self, id: VarId) -> &MetaVariable {
        &self.variables[id]
    }

    pub fn len(&self) -> usize {
        self.variables.len()
    }

    pub fn is_empty(&self) -> bool {
        self.variables.is_empty()
    }

    pub fn root_var(&self) -> VarId {
        self.root_var
    }

    pub fn num_beams(&self) -> usize {
        self.beam_realizations.len()
    }

    pub fn realization(&self, beam: usize, var: VarId) -> Option<GraphElement> {
        self.beam_realizations[beam][var]
    }

    pub fn has_symbolic(&self) -> bool {
        self.symbolic_realization.is_some()
    }

    pub fn symbolic_realization(&self, var: VarId) -> Option<GraphElement> {
        self.symbolic_realization.as_ref().and_then(|r| r[var])
    }

    /// Parent-to-child links of the variable DAG.
    pub fn var_edges(&self) -> Vec<(VarId, VarId)> {
        self.variables.iter().flat_map(|v| v.children.iter().map(move |&c| (v.id, c))).collect()
    }

    fn merge(&mut self, g: &SemanticGraph, source: Source, align: &AlignConfig) -> Result<(), MetaError> {
        let mut mapping: Vec<Option<VarId>> = vec![None; g.node_count()];
        if !self.variables.is_empty() {
            let (scaffold, scaffold_vars) = self.scaffold()?;
            let alignment = align_with(g, &scaffold, align);
            for (n, m) in alignment.mapping.iter().enumerate() {
                mapping[n] = m.map(|i| scaffold_vars[i]);
            }
            self.trim_mapping(g, &mut mapping);
            for m in mapping.iter_mut() {
                if *m == Some(self.root_var) {
                    *m = None;
                }
            }
            mapping[g.root()] = Some(self.root_var);
            self.repair_cycles(g, &mut mapping);
        }

        // existing edge variables keyed by endpoints
        let mut edge_assign: Vec<Option<VarId>> = vec![None; g.edge_count()];
        let mut taken: HashSet<VarId> = HashSet::new();
        for label_must_match in [true, false] {
            for (e, edge) in g.edges().iter().enumerate() {
                if edge_assign[e].is_some() {
                    continue;
                }
                let (Some(s), Some(t)) = (mapping[edge.source], mapping[edge.target]) else {
                    continue;
                };
                let found = self.variables.iter().find(|v| {
                    v.kind == VarKind::Edge { source: s, target: t }
                        && !taken.contains(&v.id)
                        && (!label_must_match || v.candidates.contains(&edge.label))
                });
                if let Some(v) = found {
                    taken.insert(v.id);
                    edge_assign[e] = Some(v.id);
                }
            }
        }

        // fresh variables numbered in linearization order
        let base = self.variables.len();
        let mut node_var = mapping;
        let mut edge_var = edge_assign;
        let mut fresh = Vec::new();
        for el in g.element_order() {
            let slot = match el {
                GraphElement::Node(n) => &mut node_var[n],
                GraphElement::Edge(e) => &mut edge_var[e],
            };
            if slot.is_none() {
                *slot = Some(base + fresh.len());
                fresh.push(el);
            }
        }
        let node_var: Vec<VarId> = node_var.into_iter().map(|v| v.expect("every node assigned")).collect();
        let edge_var: Vec<VarId> = edge_var.into_iter().map(|v| v.expect("every edge assigned")).collect();
        for (i, el) in fresh.iter().enumerate() {
            let kind = match *el {
                GraphElement::Node(_) => VarKind::Node,
                GraphElement::Edge(e) => {
                    let edge = &g.edges()[e];
                    VarKind::Edge { source: node_var[edge.source], target: node_var[edge.target] }
                }
            };
            self.variables.push(MetaVariable {
                id: base + i,
                kind,
                candidates: CandidateSet::default(),
                parents: Vec::new(),
                children: Vec::new(),
            });
        }
        if base == 0 {
            self.root_var = node_var[g.root()];
        }
        let total = self.variables.len();
        for r in self.beam_realizations.iter_mut() {
            r.resize(total, None);
        }
        if let Some(r) = self.symbolic_realization.as_mut() {
            r.resize(total, None);
        }

        for (n, node) in g.nodes().iter().enumerate() {
            let v = node_var[n];
            self.variables[v].candidates.add(&node.label, source);
            *self.realization_slot(source, v) = Some(GraphElement::Node(n));
        }
        for (e, edge) in g.edges().iter().enumerate() {
            let v = edge_var[e];
            self.variables[v].candidates.add(&edge.label, source);
            *self.realization_slot(source, v) = Some(GraphElement::Edge(e));
            if v >= base {
                let (s, t) = (node_var[edge.source], node_var[edge.target]);
                self.variables[v].parents.push(s);
                self.variables[v].children.push(t);
                self.variables[s].children.push(v);
                self.variables[t].parents.push(v);
            }
        }
        Ok(())
    }

    fn realization_slot(&mut self, source: Source, var: VarId) -> &mut Option<GraphElement> {
        match source {
            Source::Beam(k) => &mut self.beam_realizations[k][var],
            Source::Symbolic => &mut self.symbolic_realization.as_mut().expect("symbolic slots allocated")[var],
        }
    }

    /// A plain graph over the node variables, labeled with representative
    /// values, used as the alignment target. Returns it with the variable id
    /// of each scaffold node.
    fn scaffold(&self) -> Result<(SemanticGraph, Vec<VarId>), MetaError> {
        let node_vars: Vec<VarId> = self.variables.iter().filter(|v| v.is_node()).map(|v| v.id).collect();
        let mut index = vec![usize::MAX; self.variables.len()];
        for (i, &v) in node_vars.iter().enumerate() {
            index[v] = i;
        }
        let nodes = node_vars
            .iter()
            .enumerate()
            .map(|(i, &v)| Node { id: i, label: self.variables[v].candidates.representative().to_string() })
            .collect();
        let mut seen = HashSet::new();
        let mut edges = Vec::new();
        for v in &self.variables {
            if let VarKind::Edge { source, target } = v.kind {
                let edge = Edge {
                    source: index[source],
                    target: index[target],
                    label: v.candidates.representative().to_string(),
                };
                if seen.insert(edge.clone()) {
                    edges.push(edge);
                }
            }
        }
        let graph = SemanticGraph::new(nodes, edges, index[self.root_var])?;
        Ok((graph, node_vars))
    }

    /// Unmaps nodes whose mapping supports no label, root or edge agreement.
    fn trim_mapping(&self, g: &SemanticGraph, mapping: &mut [Option<VarId>]) {
        let incident = {
            let mut inc = vec![Vec::new(); g.node_count()];
            for (e, edge) in g.edges().iter().enumerate() {
                inc[edge.source].push(e);
                inc[edge.target].push(e);
            }
            inc
        };
        let keep: Vec<bool> = (0..g.node_count())
            .map(|n| {
                let Some(v) = mapping[n] else { return false };
                if self.variables[v].candidates.contains(g.label(n)) || (n == g.root() && v == self.root_var) {
                    return true;
                }
                incident[n].iter().any(|&e| {
                    let edge = &g.edges()[e];
                    match (mapping[edge.source], mapping[edge.target]) {
                        (Some(s), Some(t)) => self.variables.iter().any(|ev| {
                            ev.kind == VarKind::Edge { source: s, target: t } && ev.candidates.contains(&edge.label)
                        }),
                        _ => false,
                    }
                })
            })
            .collect();
        for (m, k) in mapping.iter_mut().zip(keep) {
            if !k {
                *m = None;
            }
        }
    }

    /// Unmaps nodes until merging `g` keeps the node-variable DAG acyclic.
    fn repair_cycles(&self, g: &SemanticGraph, mapping: &mut [Option<VarId>]) {
        let n_vars = self.variables.len();
        loop {
            let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n_vars + g.node_count()];
            for v in &self.variables {
                if let VarKind::Edge { source, target } = v.kind {
                    adj[source].push(target);
                }
            }
            let id = |n: NodeId, mapping: &[Option<VarId>]| mapping[n].unwrap_or(n_vars + n);
            let mut conflict = None;
            for edge in g.edges() {
                let (s, t) = (id(edge.source, mapping), id(edge.target, mapping));
                if reaches(&adj, t, s) {
                    conflict = Some(edge);
                    break;
                }
                adj[s].push(t);
            }
            let Some(edge) = conflict else { break };
            if mapping[edge.target].is_some() {
                mapping[edge.target] = None;
            } else if mapping[edge.source].is_some() && edge.source != g.root() {
                mapping[edge.source] = None;
            } else {
                for (n, m) in mapping.iter_mut().enumerate() {
                    if n != g.root() {
                        *m = None;
                    }
                }
            }
        }
    }

    /// Whether every surviving variable stays reachable from the root and
    /// every surviving edge variable keeps both endpoints.
    pub fn connected_without(&self, removed: &HashSet<VarId>) -> bool {
        if removed.contains(&self.root_var) {
            return false;
        }
        for v in &self.variables {
            if removed.contains(&v.id) {
                continue;
            }
            if let VarKind::Edge { source, target } = v.kind {
                if removed.contains(&source) || removed.contains(&target) {
                    return false;
                }
            }
        }
        let mut seen = vec![false; self.variables.len()];
        let mut stack = vec![self.root_var];
        seen[self.root_var] = true;
        while let Some(v) = stack.pop() {
            for &c in &self.variables[v].children {
                if !seen[c] && !removed.contains(&c) {
                    seen[c] = true;
                    stack.push(c);
                }
            }
        }
        self.variables.iter().all(|v| seen[v.id] || removed.contains(&v.id))
    }

    /// Copy without the given variables, renumbered densely in the original
    /// order. The caller must ensure the result stays connected.
    pub fn without(&self, removed: &BTreeSet<VarId>) -> MetaGraph {
        let mut new_id = vec![usize::MAX; self.variables.len()];
        let mut next = 0;
        for v in &self.variables {
            if !removed.contains(&v.id) {
                new_id[v.id] = next;
                next += 1;
            }
        }
        let remap =
            |ids: &[VarId]| -> Vec<VarId> { ids.iter().filter(|i| !removed.contains(i)).map(|&i| new_id[i]).collect() };
        let variables = self
            .variables
            .iter()
            .filter(|v| !removed.contains(&v.id))
            .map(|v| MetaVariable {
                id: new_id[v.id],
                kind: match v.kind {
                    VarKind::Node => VarKind::Node,
                    VarKind::Edge { source, target } => {
                        VarKind::Edge { source: new_id[source], target: new_id[target] }
                    }
                },
                candidates: v.candidates.clone(),
                parents: remap(&v.parents),
                children: remap(&v.children),
            })
            .collect();
        let keep = |r: &Vec<Option<GraphElement>>| -> Vec<Option<GraphElement>> {
            r.iter().enumerate().filter(|(i, _)| !removed.contains(i)).map(|(_, e)| *e).collect()
        };
        MetaGraph {
            variables,
            root_var: new_id[self.root_var],
            beam_realizations: self.beam_realizations.iter().map(keep).collect(),
            symbolic_realization: self.symbolic_realization.as_ref().map(keep),
        }
    }

    /// Debug dump: variables with candidates, provenance and, when tables
    /// are given, marginals and conditional log-likelihoods.
    pub fn to_json(&self, tables: Option<&GapTables>) -> serde_json::Value {
        let vars: Vec<serde_json::Value> = self
            .variables
            .iter()
            .map(|v| {
                let mut value = serde_json::to_value(v).expect("variable serializes");
                if let Some(t) = tables {
                    let candidates = v
                        .candidates
                        .iter()
                        .map(|c| {
                            serde_json::json!({
                                "symbol": c.symbol,
                                "beams": c.provenance.beams,
                                "symbolic": c.provenance.symbolic,
                                "marginal": t.marginal(v.id, &c.symbol),
                                "cond_loglik": t.cond_loglik(v.id, &c.symbol),
                            })
                        })
                        .collect::<Vec<_>>();
                    value["candidates"] = serde_json::Value::Array(candidates);
                }
                value
            })
            .collect();
        serde_json::json!({
            "root_var": self.root_var,
            "num_beams": self.num_beams(),
            "has_symbolic": self.has_symbolic(),
            "variables": vars,
        })
    }
}

fn reaches(adj: &[Vec<usize>], from: usize, to: usize) -> bool {
    if from == to {
        return true;
    }
    let mut seen = vec![false; adj.len()];
    let mut stack = vec![from];
    seen[from] = true;
    while let Some(x) = stack.pop() {
        for &y in &adj[x] {
            if y == to {
                return true;
            }
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    false
}
