//! Beam candidates: decoded token streams with log-probabilities, segmented
//! into graph symbols.

use serde::Serialize;
use thiserror::Error;

use crate::graph::{linearize, parse_linearized, GraphElement, LinearizedGraph, ParseError, SemanticGraph, SymbolKind};

/// Slack for comparing sums of log-probabilities.
const LOGPROB_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BeamError {
    #[error("candidate does not parse: {0}")]
    Parse(#[from] ParseError),
    #[error("log-probability {value} at index {index} is not a finite value <= 0")]
    InvalidLogprob { index: usize, value: f64 },
    #[error("expected {expected} symbol log-probabilities, got {got}")]
    SymbolCount { expected: usize, got: usize },
    #[error("sequence log-probability {sequence} exceeds the sum of symbol log-probabilities {symbols}")]
    SequenceAboveSymbols { sequence: f64, symbols: f64 },
    #[error("beam set has no valid candidates")]
    Empty,
    #[error("temperature must be a finite value > 0 (got {0})")]
    Temperature(f64),
}

fn check_logprob(index: usize, value: f64) -> Result<(), BeamError> {
    if value.is_finite() && value <= 0.0 {
        Ok(())
    } else {
        Err(BeamError::InvalidLogprob { index, value })
    }
}

/// One decoded hypothesis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeamCandidate {
    tokens: Vec<(String, f64)>,
    sequence_logprob: f64,
    linearized: LinearizedGraph,
    graph: SemanticGraph,
    symbol_logprobs: Vec<f64>,
    #[serde(skip)]
    node_span: Vec<usize>,
    #[serde(skip)]
    edge_span: Vec<usize>,
}

impl BeamCandidate {
    fn assemble(
        tokens: Vec<(String, f64)>,
        sequence_logprob: f64,
        linearized: LinearizedGraph,
        graph: SemanticGraph,
        symbol_logprobs: Vec<f64>,
    ) -> Self {
        let mut node_span = vec![usize::MAX; graph.node_count()];
        let mut edge_span = vec![usize::MAX; graph.edge_count()];
        for (i, span) in linearized.symbols.iter().enumerate() {
            match (span.kind, span.element) {
                (SymbolKind::NodeLabel, GraphElement::Node(n)) => node_span[n] = i,
                (SymbolKind::EdgeRole, GraphElement::Edge(e)) => edge_span[e] = i,
                _ => {}
            }
        }
        BeamCandidate { tokens, sequence_logprob, linearized, graph, symbol_logprobs, node_span, edge_span }
    }

    /// Candidate from a graph string with per-symbol log-probabilities
    /// (one per span, in text order) and a sequence log-probability.
    pub fn from_precomputed(text: &str, symbol_logprobs: Vec<f64>, sequence_logprob: f64) -> Result<Self, BeamError> {
        let (graph, linearized) = parse_linearized(text)?;
        if symbol_logprobs.len() != linearized.symbols.len() {
            return Err(BeamError::SymbolCount { expected: linearized.symbols.len(), got: symbol_logprobs.len() });
        }
        for (i, &lp) in symbol_logprobs.iter().enumerate() {
            check_logprob(i, lp)?;
        }
        check_logprob(0, sequence_logprob)?;
        let symbols: f64 = symbol_logprobs.iter().sum();
        if sequence_logprob > symbols + LOGPROB_TOLERANCE {
            return Err(BeamError::SequenceAboveSymbols { sequence: sequence_logprob, symbols });
        }
        Ok(Self::assemble(Vec::new(), sequence_logprob, linearized, graph, symbol_logprobs))
    }

    /// Candidate for an already-built graph; the text is its canonical
    /// serialization and the sequence log-probability is the symbol sum.
    pub fn from_graph(graph: &SemanticGraph, symbol_logprobs: Vec<f64>) -> Result<Self, BeamError> {
        let linearized = linearize(graph);
        let sequence: f64 = symbol_logprobs.iter().sum();
        Self::from_precomputed(&linearized.text, symbol_logprobs, sequence)
    }

    pub fn tokens(&self) -> &[(String, f64)] {
        &self.tokens
    }

    pub fn sequence_logprob(&self) -> f64 {
        self.sequence_logprob
    }

    pub fn linearized(&self) -> &LinearizedGraph {
        &self.linearized
    }

    pub fn graph(&self) -> &SemanticGraph {
        &self.graph
    }

    pub fn symbol_logprobs(&self) -> &[f64] {
        &self.symbol_logprobs
    }

    /// Span index introducing `element`.
    pub fn element_position(&self, element: GraphElement) -> usize {
        match element {
            GraphElement::Node(n) => self.node_span[n],
            GraphElement::Edge(e) => self.edge_span[e],
        }
    }

    /// Within-beam log-probability of the symbol that introduces `element`.
    pub fn element_logprob(&self, element: GraphElement) -> f64 {
        self.symbol_logprobs[self.element_position(element)]
    }

    /// Symbol texts in linearization order.
    pub fn symbol_sequence(&self) -> Vec<String> {
        self.linearized.symbol_texts()
    }
}

/// Segments a token stream into graph symbols.
///
/// The token texts are concatenated and parsed. Each token goes to the
/// symbol span containing its first character; tokens starting on a
/// structural character (or empty tokens) are discarded from every symbol.
/// A symbol's log-probability is the sum over its tokens.
pub fn segment_symbols(tokens: &[(String, f64)]) -> Result<BeamCandidate, BeamError> {
    for (i, (_, lp)) in tokens.iter().enumerate() {
        check_logprob(i, *lp)?;
    }
    let text: String = tokens.iter().map(|(t, _)| t.as_str()).collect();
    let (graph, linearized) = parse_linearized(&text)?;
    let mut symbol_logprobs = vec![0.0; linearized.symbols.len()];
    let mut offset = 0;
    for (token, lp) in tokens {
        let len = token.chars().count();
        if len > 0 {
            if let Some(span) = linearized.span_at(offset) {
                symbol_logprobs[span] += lp;
            }
        }
        offset += len;
    }
    let sequence_logprob = tokens.iter().map(|(_, lp)| lp).sum();
    Ok(BeamCandidate::assemble(tokens.to_vec(), sequence_logprob, linearized, graph, symbol_logprobs))
}

/// The K decoded candidates for one input, best first.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeamSet {
    pub input_id: String,
    pub input_text: String,
    candidates: Vec<BeamCandidate>,
    /// Candidates dropped because they failed to parse or validate.
    pub invalid_count: usize,
}

impl BeamSet {
    /// Sorts candidates by sequence log-probability, descending (stable).
    pub fn new(
        input_id: impl Into<String>,
        input_text: impl Into<String>,
        mut candidates: Vec<BeamCandidate>,
    ) -> Result<Self, BeamError> {
        if candidates.is_empty() {
            return Err(BeamError::Empty);
        }
        candidates.sort_by(|a, b| b.sequence_logprob.total_cmp(&a.sequence_logprob));
        Ok(BeamSet { input_id: input_id.into(), input_text: input_text.into(), candidates, invalid_count: 0 })
    }

    /// Builds a beam set from raw candidates, dropping invalid ones. Returns
    /// the set (or `Empty` if nothing survived) plus per-candidate errors.
    pub fn from_results(
        input_id: impl Into<String>,
        input_text: impl Into<String>,
        results: Vec<Result<BeamCandidate, BeamError>>,
    ) -> (Result<Self, BeamError>, Vec<(usize, BeamError)>) {
        let mut valid = Vec::new();
        let mut errors = Vec::new();
        for (i, r) in results.into_iter().enumerate() {
            match r {
                Ok(c) => valid.push(c),
                Err(e) => errors.push((i, e)),
            }
        }
        let set = BeamSet::new(input_id, input_text, valid).map(|mut s| {
            s.invalid_count = errors.len();
            s
        });
        (set, errors)
    }

    pub fn candidates(&self) -> &[BeamCandidate] {
        &self.candidates
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn graphs(&self) -> Vec<&SemanticGraph> {
        self.candidates.iter().map(|c| c.graph()).collect()
    }

    /// Sub-beam set over the given candidate indices, re-sorted.
    pub fn subset(&self, indices: &[usize]) -> Result<BeamSet, BeamError> {
        let candidates = indices.iter().map(|&i| self.candidates[i].clone()).collect();
        let mut set = BeamSet::new(self.input_id.clone(), self.input_text.clone(), candidates)?;
        set.invalid_count = self.invalid_count;
        Ok(set)
    }
}

/// Importance weights over the beam: softmax of sequence log-probability / t.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BeamPosterior {
    pub weights: Vec<f64>,
    pub temperature: f64,
}

impl BeamPosterior {
    pub fn new(beams: &BeamSet, temperature: f64) -> Result<Self, BeamError> {
        let logprobs: Vec<f64> = beams.candidates().iter().map(|c| c.sequence_logprob()).collect();
        Self::from_logprobs(&logprobs, temperature)
    }

    pub fn from_logprobs(logprobs: &[f64], temperature: f64) -> Result<Self, BeamError> {
        if !(temperature.is_finite() && temperature > 0.0) {
            return Err(BeamError::Temperature(temperature));
        }
        Ok(BeamPosterior { weights: tempered_softmax(logprobs, temperature), temperature })
    }
}

/// Softmax of `logprobs / temperature`, stabilized by the maximum.
pub fn tempered_softmax(logprobs: &[f64], temperature: f64) -> Vec<f64> {
    if logprobs.is_empty() {
        return Vec::new();
    }
    let max = logprobs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logprobs.iter().map(|lp| ((lp - max) / temperature).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Posterior weights for a beam set at temperature `t`.
pub fn beam_posterior(beams: &BeamSet, temperature: f64) -> Result<BeamPosterior, BeamError> {
    BeamPosterior::new(beams, temperature)
}
