//! Triple-based graph alignment and Smatch scoring.
//!
//! Triples are `instance(n, label)`, `role(src, tgt)` and `top(root)`. A
//! mapping is an injective partial map from the nodes of `a` to the nodes of
//! `b`; a triple of `a` matches when its image is a triple of `b`.

use std::collections::{HashMap, HashSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{NodeId, SemanticGraph};

/// Largest graph (in nodes) accepted by [`exhaustive_align`].
pub const EXHAUSTIVE_LIMIT: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AlignError {
    #[error("exhaustive alignment supports at most {EXHAUSTIVE_LIMIT} nodes per graph (got {0} and {1})")]
    TooLarge(usize, usize),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MatchScore {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub matched: usize,
    #[serde(rename = "total_pred")]
    pub total_a: usize,
    #[serde(rename = "total_gold")]
    pub total_b: usize,
}

impl MatchScore {
    pub fn from_counts(matched: usize, total_a: usize, total_b: usize) -> Self {
        let (precision, recall) = (ratio(matched, total_a), ratio(matched, total_b));
        let f1 = if matched == 0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        MatchScore { precision, recall, f1, matched, total_a, total_b }
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// F1 over a pair of counts; two empty sides agree perfectly.
pub fn f1_from_counts(matched: usize, total_a: usize, total_b: usize) -> f64 {
    if total_a == 0 && total_b == 0 {
        1.0
    } else {
        MatchScore::from_counts(matched, total_a, total_b).f1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Alignment {
    /// `mapping[a] = Some(b)` maps node `a` of the first graph onto `b`.
    pub mapping: Vec<Option<NodeId>>,
    pub matched_triples: usize,
    pub score: MatchScore,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig { restarts: 4, iterations: 5, seed: 0 }
    }
}

/// Per-kind match counts under one alignment.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentCounts {
    pub node_matched: usize,
    pub node_a: usize,
    pub node_b: usize,
    pub edge_matched: usize,
    pub edge_a: usize,
    pub edge_b: usize,
}

impl ComponentCounts {
    pub fn node_f1(&self) -> f64 {
        f1_from_counts(self.node_matched, self.node_a, self.node_b)
    }

    pub fn edge_f1(&self) -> f64 {
        f1_from_counts(self.edge_matched, self.edge_a, self.edge_b)
    }

    pub fn add(&mut self, other: &ComponentCounts) {
        self.node_matched += other.node_matched;
        self.node_a += other.node_a;
        self.node_b += other.node_b;
        self.edge_matched += other.edge_matched;
        self.edge_a += other.edge_a;
        self.edge_b += other.edge_b;
    }
}

/// Precomputed view of a graph pair for fast mapping evaluation.
struct Scorer {
    a_labels: Vec<u32>,
    b_labels: Vec<u32>,
    a_edges: Vec<(NodeId, u32, NodeId)>,
    a_incident: Vec<Vec<usize>>,
    b_edges: HashSet<(NodeId, u32, NodeId)>,
    a_root: NodeId,
    b_root: NodeId,
    total_a: usize,
    total_b: usize,
}

impl Scorer {
    fn new(a: &SemanticGraph, b: &SemanticGraph) -> Self {
        let mut interner: HashMap<&str, u32> = HashMap::new();
        let mut intern = |s| {
            let next = interner.len() as u32;
            *interner.entry(s).or_insert(next)
        };
        let a_labels = a.nodes().iter().map(|n| intern(n.label.as_str())).collect();
        let b_labels = b.nodes().iter().map(|n| intern(n.label.as_str())).collect();
        let a_edges: Vec<_> = a.edges().iter().map(|e| (e.source, intern(e.label.as_str()), e.target)).collect();
        let b_edges = b.edges().iter().map(|e| (e.source, intern(e.label.as_str()), e.target)).collect();
        let mut a_incident = vec![Vec::new(); a.node_count()];
        for (i, &(s, _, t)) in a_edges.iter().enumerate() {
            a_incident[s].push(i);
            a_incident[t].push(i);
        }
        Scorer {
            a_labels,
            b_labels,
            a_edges,
            a_incident,
            b_edges,
            a_root: a.root(),
            b_root: b.root(),
            total_a: a.node_count() + a.edge_count() + 1,
            total_b: b.node_count() + b.edge_count() + 1,
        }
    }

    fn instance_match(&self, a: NodeId, mapping: &[Option<NodeId>]) -> bool {
        mapping[a].is_some_and(|b| self.a_labels[a] == self.b_labels[b])
    }

    fn relation_match(&self, edge: usize, mapping: &[Option<NodeId>]) -> bool {
        let (s, l, t) = self.a_edges[edge];
        match (mapping[s], mapping[t]) {
            (Some(bs), Some(bt)) => self.b_edges.contains(&(bs, l, bt)),
            _ => false,
        }
    }

    fn top_match(&self, mapping: &[Option<NodeId>]) -> bool {
        mapping[self.a_root] == Some(self.b_root)
    }

    fn counts(&self, mapping: &[Option<NodeId>]) -> (usize, usize, bool) {
        let nodes = (0..self.a_labels.len()).filter(|&a| self.instance_match(a, mapping)).count();
        let edges = (0..self.a_edges.len()).filter(|&e| self.relation_match(e, mapping)).count();
        (nodes, edges, self.top_match(mapping))
    }

    fn score(&self, mapping: &[Option<NodeId>]) -> usize {
        let (n, e, top) = self.counts(mapping);
        n + e + top as usize
    }

    /// Matches among triples that touch any of `nodes`.
    fn local(&self, mapping: &[Option<NodeId>], nodes: &[NodeId]) -> usize {
        let mut total = 0;
        for (i, &a) in nodes.iter().enumerate() {
            total += self.instance_match(a, mapping) as usize;
            if a == self.a_root {
                total += self.top_match(mapping) as usize;
            }
            for &edge in &self.a_incident[a] {
                let (s, _, t) = self.a_edges[edge];
                // count an edge joining two moved nodes only once
                let other = if s == a { t } else { s };
                if nodes[..i].contains(&other) {
                    continue;
                }
                total += self.relation_match(edge, mapping) as usize;
            }
        }
        total
    }

    fn alignment(&self, mapping: Vec<Option<NodeId>>) -> Alignment {
        let matched = self.score(&mapping);
        Alignment {
            mapping,
            matched_triples: matched,
            score: MatchScore::from_counts(matched, self.total_a, self.total_b),
        }
    }

    fn greedy_mapping(&self) -> Vec<Option<NodeId>> {
        let nb = self.b_labels.len();
        let mut used = vec![false; nb];
        let mut mapping = vec![None; self.a_labels.len()];
        for (a, slot) in mapping.iter_mut().enumerate() {
            if let Some(b) = (0..nb).find(|&b| !used[b] && self.b_labels[b] == self.a_labels[a]) {
                used[b] = true;
                *slot = Some(b);
            }
        }
        let mut free = (0..nb).filter(|&b| !used[b]);
        for slot in mapping.iter_mut().filter(|s| s.is_none()) {
            match free.next() {
                Some(b) => *slot = Some(b),
                None => break,
            }
        }
        mapping
    }

    fn random_mapping(&self, rng: &mut ChaCha8Rng) -> Vec<Option<NodeId>> {
        let mut a_order: Vec<NodeId> = (0..self.a_labels.len()).collect();
        let mut b_order: Vec<NodeId> = (0..self.b_labels.len()).collect();
        a_order.shuffle(rng);
        b_order.shuffle(rng);
        let mut mapping = vec![None; a_order.len()];
        for (a, b) in a_order.into_iter().zip(b_order) {
            mapping[a] = Some(b);
        }
        mapping
    }

    /// Up to `iterations` sweeps; each sweep gives every node of `a` one
    /// chance to take its best strictly improving move or swap.
    fn climb(&self, mapping: &mut [Option<NodeId>], iterations: usize) {
        let na = mapping.len();
        let nb = self.b_labels.len();
        let mut used = vec![false; nb];
        for b in mapping.iter().flatten() {
            used[*b] = true;
        }
        for _ in 0..iterations {
            let mut improved = false;
            for a in 0..na {
                let mut best_gain = 0usize;
                let mut best: Option<Move> = None;
                let before_a = self.local(mapping, &[a]);
                for b in (0..nb).filter(|&b| !used[b]) {
                    let old = mapping[a];
                    mapping[a] = Some(b);
                    let after = self.local(mapping, &[a]);
                    mapping[a] = old;
                    if after > before_a && after - before_a > best_gain {
                        best_gain = after - before_a;
                        best = Some(Move::Remap(b));
                    }
                }
                for other in (0..na).filter(|&o| o != a) {
                    if mapping[a].is_none() && mapping[other].is_none() {
                        continue;
                    }
                    let pair = [a, other];
                    let before = self.local(mapping, &pair);
                    mapping.swap(a, other);
                    let after = self.local(mapping, &pair);
                    mapping.swap(a, other);
                    if after > before && after - before > best_gain {
                        best_gain = after - before;
                        best = Some(Move::Swap(other));
                    }
                }
                match best {
                    Some(Move::Remap(b)) => {
                        if let Some(old) = mapping[a] {
                            used[old] = false;
                        }
                        used[b] = true;
                        mapping[a] = Some(b);
                        improved = true;
                    }
                    Some(Move::Swap(other)) => {
                        mapping.swap(a, other);
                        improved = true;
                    }
                    None => {}
                }
            }
            if !improved {
                break;
            }
        }
    }
}

enum Move {
    Remap(NodeId),
    Swap(NodeId),
}

fn better(candidate: &Alignment, incumbent: &Option<Alignment>) -> bool {
    match incumbent {
        None => true,
        Some(best) => {
            candidate.matched_triples > best.matched_triples
                || (candidate.matched_triples == best.matched_triples && candidate.mapping < best.mapping)
        }
    }
}

/// Hill-climbing alignment with the default seed.
pub fn align(a: &SemanticGraph, b: &SemanticGraph, restarts: usize, iterations: usize) -> Alignment {
    align_with(a, b, &AlignConfig { restarts, iterations, seed: 0 })
}

/// Hill-climbing alignment. Restart 0 starts from a greedy label match,
/// restart `r > 0` from a random mapping seeded with `seed + r`. The best
/// result wins; ties go to the lexicographically smallest mapping.
pub fn align_with(a: &SemanticGraph, b: &SemanticGraph, config: &AlignConfig) -> Alignment {
    let scorer = Scorer::new(a, b);
    let mut best: Option<Alignment> = None;
    for restart in 0..config.restarts.max(1) {
        let mut mapping = if restart == 0 {
            scorer.greedy_mapping()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed.wrapping_add(restart as u64));
            scorer.random_mapping(&mut rng)
        };
        scorer.climb(&mut mapping, config.iterations.max(1));
        let candidate = scorer.alignment(mapping);
        if better(&candidate, &best) {
            best = Some(candidate);
        }
    }
    best.expect("at least one restart")
}

/// Globally optimal alignment by enumerating every injective mapping that
/// covers the smaller graph. Ties go to the lexicographically smallest mapping.
pub fn exhaustive_align(a: &SemanticGraph, b: &SemanticGraph) -> Result<Alignment, AlignError> {
    let (na, nb) = (a.node_count(), b.node_count());
    if na > EXHAUSTIVE_LIMIT || nb > EXHAUSTIVE_LIMIT {
        return Err(AlignError::TooLarge(na, nb));
    }
    let scorer = Scorer::new(a, b);
    let mut search = Exhaustive {
        scorer: &scorer,
        mapping: vec![None; na],
        used: vec![false; nb],
        unmapped_budget: na.saturating_sub(nb),
        best: None,
    };
    search.visit(0);
    Ok(scorer.alignment(search.best.expect("enumeration visits at least one mapping").1))
}

struct Exhaustive<'a> {
    scorer: &'a Scorer,
    mapping: Vec<Option<NodeId>>,
    used: Vec<bool>,
    unmapped_budget: usize,
    best: Option<(usize, Vec<Option<NodeId>>)>,
}

impl Exhaustive<'_> {
    fn visit(&mut self, a: usize) {
        if a == self.mapping.len() {
            let score = self.scorer.score(&self.mapping);
            // enumeration is lexicographic, so only strict gains replace the incumbent
            if self.best.as_ref().is_none_or(|(s, _)| score > *s) {
                self.best = Some((score, self.mapping.clone()));
            }
            return;
        }
        if self.unmapped_budget > 0 {
            self.unmapped_budget -= 1;
            self.mapping[a] = None;
            self.visit(a + 1);
            self.unmapped_budget += 1;
        }
        for b in 0..self.used.len() {
            if self.used[b] {
                continue;
            }
            self.used[b] = true;
            self.mapping[a] = Some(b);
            self.visit(a + 1);
            self.mapping[a] = None;
            self.used[b] = false;
        }
    }
}

/// Node (instance) and edge (relation) match counts under `alignment`.
pub fn component_counts(a: &SemanticGraph, b: &SemanticGraph, alignment: &Alignment) -> ComponentCounts {
    let scorer = Scorer::new(a, b);
    let (node_matched, edge_matched, _) = scorer.counts(&alignment.mapping);
    ComponentCounts {
        node_matched,
        node_a: a.node_count(),
        node_b: b.node_count(),
        edge_matched,
        edge_a: a.edge_count(),
        edge_b: b.edge_count(),
    }
}

/// Node F1 and edge F1 of `pred` against `gold` under `alignment`.
pub fn node_edge_f1(pred: &SemanticGraph, gold: &SemanticGraph, alignment: &Alignment) -> (f64, f64) {
    let c = component_counts(pred, gold, alignment);
    (c.node_f1(), c.edge_f1())
}

/// Smatch of `pred` against `gold` with the default alignment settings.
pub fn smatch_score(pred: &SemanticGraph, gold: &SemanticGraph) -> MatchScore {
    align_with(pred, gold, &AlignConfig::default()).score
}

/// Label-preserving isomorphism that also respects the root. Exact for
/// graphs within [`EXHAUSTIVE_LIMIT`]; larger graphs rely on a perfect
/// hill-climbing alignment.
pub fn isomorphic(a: &SemanticGraph, b: &SemanticGraph) -> bool {
    if a.node_count() != b.node_count() || a.edge_count() != b.edge_count() {
        return false;
    }
    let mut la: Vec<&str> = a.nodes().iter().map(|n| n.label.as_str()).collect();
    let mut lb: Vec<&str> = b.nodes().iter().map(|n| n.label.as_str()).collect();
    la.sort_unstable();
    lb.sort_unstable();
    if la != lb {
        return false;
    }
    let total = a.node_count() + a.edge_count() + 1;
    let alignment = match exhaustive_align(a, b) {
        Ok(al) => al,
        Err(_) => align_with(a, b, &AlignConfig { restarts: 8, iterations: 10, seed: 0 }),
    };
    alignment.matched_triples == total
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(s: &str) -> SemanticGraph {
        s.parse().unwrap()
    }

    #[test]
    fn identity_alignment_is_perfect() {
        let a = g("(_a_v :ARG1 (_p_n *1) :ARG2 (_q_n :ARG1 *1))");
        let al = align(&a, &a, 4, 5);
        assert_eq!(al.matched_triples, 7);
        assert_eq!(al.score.f1, 1.0);
        assert_eq!(exhaustive_align(&a, &a).unwrap().score.f1, 1.0);
    }

    #[test]
    fn one_label_differs() {
        let a = g("(_a_n :ARG1 (_b_n))");
        let b = g("(_a_n :ARG1 (_c_n))");
        let al = align(&a, &b, 4, 5);
        assert_eq!(al.matched_triples, 3);
        assert_eq!((al.score.total_a, al.score.total_b), (4, 4));
        assert!((al.score.f1 - 0.75).abs() < 1e-12);
        assert_eq!(exhaustive_align(&a, &b).unwrap().matched_triples, 3);
        let (node_f1, edge_f1) = node_edge_f1(&a, &b, &al);
        assert!((node_f1 - 0.5).abs() < 1e-12);
        assert!((edge_f1 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn structure_matches_without_shared_labels() {
        let a = g("(_x :ARG1 (_y :ARG2 (_z)))");
        let b = g("(_p :ARG1 (_q) :ARG2 (_r))");
        let oracle = exhaustive_align(&a, &b).unwrap();
        // top plus one ARG1 relation
        assert_eq!(oracle.matched_triples, 2);
        assert_eq!(align(&a, &b, 4, 5).matched_triples, 2);
    }

    #[test]
    fn uneven_sizes() {
        let a = g("(_a :ARG1 (_b) :ARG2 (_c))");
        let b = g("(_a :ARG2 (_c))");
        let oracle = exhaustive_align(&a, &b).unwrap();
        assert_eq!(oracle.matched_triples, 4);
        assert_eq!(oracle.mapping.iter().filter(|m| m.is_some()).count(), 2);
        assert_eq!(align(&a, &b, 4, 5).matched_triples, 4);
        assert_eq!(exhaustive_align(&b, &a).unwrap().matched_triples, 4);
    }

    #[test]
    fn exhaustive_size_limit() {
        let labels: Vec<String> = (0..9).map(|i| format!("n{i}")).collect();
        let edges: Vec<(usize, &str, usize)> = (1..9).map(|i| (0, "R", i)).collect();
        let big = SemanticGraph::from_parts(&labels, &edges, 0).unwrap();
        assert_eq!(exhaustive_align(&big, &big), Err(AlignError::TooLarge(9, 9)));
        assert!(isomorphic(&big, &big));
    }

    #[test]
    fn isomorphism_ignores_node_numbering() {
        let a = SemanticGraph::from_parts(&["r", "x", "y"], &[(0, "A", 1), (0, "B", 2)], 0).unwrap();
        let b = SemanticGraph::from_parts(&["y", "r", "x"], &[(1, "B", 0), (1, "A", 2)], 1).unwrap();
        assert!(isomorphic(&a, &b));
        let c = SemanticGraph::from_parts(&["y", "r", "x"], &[(1, "A", 0), (1, "B", 2)], 1).unwrap();
        assert!(!isomorphic(&a, &c));
    }

    #[test]
    fn score_json_keys() {
        let s = MatchScore::from_counts(3, 4, 4);
        let v = serde_json::to_value(s).unwrap();
        assert_eq!(v["total_pred"], 4);
        assert_eq!(v["total_gold"], 4);
        assert_eq!(v["matched"], 3);
        assert_eq!(MatchScore::from_counts(0, 4, 4).f1, 0.0);
    }

    #[test]
    fn seeded_alignment_is_reproducible() {
        let a = g("(_a :ARG1 (_b :ARG1 (_c)) :ARG2 (_d))");
        let b = g("(_a :ARG2 (_b) :ARG1 (_d :ARG1 (_c)))");
        let config = AlignConfig { restarts: 4, iterations: 5, seed: 17 };
        assert_eq!(align_with(&a, &b, &config), align_with(&a, &b, &config));
    }
}
