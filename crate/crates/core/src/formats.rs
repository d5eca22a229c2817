//! Line-oriented file formats: beam-set JSONL, graph listings and
//! prediction JSONL.

use std::collections::BTreeMap;
use std::io::BufRead;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::beam::{segment_symbols, BeamCandidate, BeamError, BeamSet};
use crate::graph::{ParseError, SemanticGraph};

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("line {line}: {source}")]
    Json { line: usize, source: serde_json::Error },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: ParseError },
    #[error("line {line}: {source}")]
    Io { line: usize, source: std::io::Error },
    #[error("line {line}: duplicate id {id:?}")]
    DuplicateId { line: usize, id: String },
}

impl RecordError {
    pub fn line(&self) -> usize {
        match self {
            RecordError::Json { line, .. }
            | RecordError::Graph { line, .. }
            | RecordError::Io { line, .. }
            | RecordError::DuplicateId { line, .. } => *line,
        }
    }
}

/// Ids may be written as strings or integers.
fn string_or_number<'de, D: Deserializer<'de>>(d: D) -> Result<String, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Id {
        S(String),
        N(serde_json::Number),
    }
    Ok(match Id::deserialize(d)? {
        Id::S(s) => s,
        Id::N(n) => n.to_string(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BeamEntry {
    Tokens { tokens: Vec<(String, f64)> },
    Precomputed { graph: String, symbol_logprobs: Vec<f64>, sequence_logprob: f64 },
}

impl BeamEntry {
    pub fn candidate(&self) -> Result<BeamCandidate, BeamError> {
        match self {
            BeamEntry::Tokens { tokens } => segment_symbols(tokens),
            BeamEntry::Precomputed { graph, symbol_logprobs, sequence_logprob } => {
                BeamCandidate::from_precomputed(graph, symbol_logprobs.clone(), *sequence_logprob)
            }
        }
    }
}

/// One sentence of beam-search output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BeamRecord {
    #[serde(deserialize_with = "string_or_number")]
    pub id: String,
    #[serde(default)]
    pub input: String,
    pub beams: Vec<BeamEntry>,
}

impl BeamRecord {
    /// Valid candidates as a beam set (`Err(Empty)` if none parse), and the
    /// errors of the rejected ones by beam index.
    pub fn beam_set(&self) -> (Result<BeamSet, BeamError>, Vec<(usize, BeamError)>) {
        BeamSet::from_results(
            self.id.clone(),
            self.input.clone(),
            self.beams.iter().map(BeamEntry::candidate).collect(),
        )
    }
}

fn content_lines(reader: impl BufRead) -> impl Iterator<Item = (usize, Result<String, std::io::Error>)> {
    reader
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| l.as_ref().map_or(true, |s| !s.trim().is_empty() && !s.trim_start().starts_with('#')))
}

/// Parses beam JSONL, one result per non-blank line.
pub fn read_beam_records(reader: impl BufRead) -> Vec<Result<BeamRecord, RecordError>> {
    content_lines(reader)
        .map(|(line, l)| {
            let l = l.map_err(|source| RecordError::Io { line, source })?;
            serde_json::from_str(&l).map_err(|source| RecordError::Json { line, source })
        })
        .collect()
}

#[derive(Deserialize)]
struct GraphLine {
    #[serde(deserialize_with = "string_or_number")]
    id: String,
    graph: String,
}

/// Reads a graph listing. Each content line is either a JSON object with
/// `id` and `graph`, `id<TAB>graph`, or a bare graph whose id is its
/// zero-based position among content lines. Blank lines and lines starting
/// with `#` are skipped.
pub fn read_graphs(reader: impl BufRead) -> Vec<Result<(String, SemanticGraph), RecordError>> {
    let mut seen = std::collections::HashSet::new();
    content_lines(reader)
        .enumerate()
        .map(|(ordinal, (line, l))| {
            let l = l.map_err(|source| RecordError::Io { line, source })?;
            let trimmed = l.trim();
            let (id, text) = if trimmed.starts_with('{') {
                let g: GraphLine =
                    serde_json::from_str(trimmed).map_err(|source| RecordError::Json { line, source })?;
                (g.id, g.graph)
            } else if let Some((id, text)) = trimmed.split_once('\t') {
                (id.trim().to_string(), text.to_string())
            } else {
                (ordinal.to_string(), trimmed.to_string())
            };
            let graph = text.parse().map_err(|source| RecordError::Graph { line, source })?;
            if !seen.insert(id.clone()) {
                return Err(RecordError::DuplicateId { line, id });
            }
            Ok((id, graph))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecord {
    pub marginal: f64,
    pub cond_loglik: f64,
    pub score: f64,
    pub beams: Vec<usize>,
    pub symbolic: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariableRecord {
    pub id: usize,
    pub kind: String,
    pub chosen: Option<String>,
    pub alpha: f64,
    pub candidates: BTreeMap<String, CandidateRecord>,
}

/// One line of inference output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub id: String,
    pub graph: String,
    pub novel: bool,
    /// One-based mixture component, when the mixture is enabled.
    pub component: Option<usize>,
    pub variables: Vec<VariableRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fallback: Option<String>,
}
