#![allow(dead_code)]

use gapinfer::graph::{parse_linearized, Edge, Node, SemanticGraph};
use gapinfer::{BeamCandidate, BeamSet};
use rand::Rng;

pub const NODE_LABELS: [&str; 4] = ["_a_n", "_b_n", "_c_v", "_d_q"];
pub const ROLES: [&str; 3] = ["ARG1", "ARG2", "BV"];

/// Canonical two-beam fixture.
pub fn f1() -> BeamSet {
    let b1 = BeamCandidate::from_precomputed("(_a_n :ARG1 (_b_n))", vec![0.0, 0.0, 0.9f64.ln()], 0.9f64.ln()).unwrap();
    let b2 = BeamCandidate::from_precomputed("(_a_n :ARG1 (_c_n))", vec![0.0, 0.5f64.ln(), 0.8f64.ln()], 0.4f64.ln())
        .unwrap();
    BeamSet::new("f1", "", vec![b1, b2]).unwrap()
}

pub fn graph(text: &str) -> SemanticGraph {
    text.parse().unwrap()
}

/// Random rooted DAG: node `i > 0` hangs off an earlier node, and with
/// probability `reentrancy` gains a second incoming edge from another
/// earlier node.
pub fn random_dag(rng: &mut impl Rng, nodes: usize, reentrancy: f64, labels: &[&str], roles: &[&str]) -> SemanticGraph {
    let node_list: Vec<Node> =
        (0..nodes).map(|id| Node { id, label: labels[rng.gen_range(0..labels.len())].to_string() }).collect();
    let mut edges: Vec<Edge> = Vec::new();
    for i in 1..nodes {
        let parent = rng.gen_range(0..i);
        edges.push(Edge { source: parent, target: i, label: roles[rng.gen_range(0..roles.len())].to_string() });
        if i > 1 && rng.gen_bool(reentrancy) {
            let other = rng.gen_range(0..i);
            let label = roles[rng.gen_range(0..roles.len())].to_string();
            if !edges.iter().any(|e| e.source == other && e.target == i && e.label == label) {
                edges.push(Edge { source: other, target: i, label });
            }
        }
    }
    SemanticGraph::new(node_list, edges, 0).unwrap()
}

/// Beam candidate over `g` with random symbol and structural log-probs.
pub fn random_candidate(rng: &mut impl Rng, g: &SemanticGraph) -> BeamCandidate {
    let text = g.serialize();
    let (_, lin) = parse_linearized(&text).unwrap();
    let lps: Vec<f64> = (0..lin.symbols.len()).map(|_| rng.gen_range(0.05f64..=1.0).ln()).collect();
    let seq = lps.iter().sum::<f64>() - rng.gen_range(0.0..0.5);
    BeamCandidate::from_precomputed(&text, lps, seq).unwrap()
}

/// `k` beams whose graphs share a small label vocabulary, each with at
/// most `max_symbols` symbols.
pub fn random_beam_set(rng: &mut impl Rng, k: usize, max_symbols: usize) -> BeamSet {
    let candidates = (0..k)
        .map(|_| loop {
            let n = rng.gen_range(1..=max_symbols.div_ceil(2));
            let g = random_dag(rng, n, 0.2, &NODE_LABELS[..3], &ROLES[..2]);
            if parse_linearized(&g.serialize()).unwrap().1.symbols.len() <= max_symbols {
                break random_candidate(rng, &g);
            }
        })
        .collect();
    BeamSet::new("r", "", candidates).unwrap()
}
